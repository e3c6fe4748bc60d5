//! Image encoder and the three decoder heads.

mod encoder;
mod network;
mod preprocess;

pub use encoder::{encode, EncoderConfig};
pub use network::{DecoderKind, Model, ModelConfig, Outputs, Targets, Transcription, IMAGE_PARAM};
pub use preprocess::preprocess;

use crate::codecs::CodecError;
use crate::ctc::CtcError;
use crate::diffcore::{CheckpointError, TensorError};
use crate::notation::NotationError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Notation(#[from] NotationError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("empty image")]
    EmptyImage,
    #[error("image {width}x{height} is too small")]
    ImageTooSmall { width: usize, height: usize },
    #[error("encoder expects a [1, {expected}, W] input, got {got:?}")]
    InputShape { expected: usize, got: Vec<usize> },
    #[error("input width {width} is below the width downsampling factor {min}")]
    TooNarrow { width: usize, min: usize },
    #[error("outputs of the {outputs} decoder cannot be scored against {targets} targets")]
    KindMismatch { outputs: DecoderKind, targets: DecoderKind },
}

#[cfg(test)]
mod tests;
