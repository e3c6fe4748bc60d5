//! Minimal differentiable tensor substrate: dense tensors, a per-pass
//! computation graph with the operations the recognition model needs,
//! finite-difference gradient checking and a parameter checkpoint format.

mod checkpoint;
mod gradcheck;
mod graph;
pub mod linalg;
mod params;
mod tensor;

use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, grad_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use graph::{CustomOp, Graph, Var};
pub(crate) use graph::{log_sigmoid, sigmoid};
pub use params::{Gradients, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        TensorError::ShapeMismatch { op, detail }
    }
}

#[cfg(test)]
mod tests;
