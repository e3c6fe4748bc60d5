//! The `polyomr` command line: dataset generation, training, evaluation and
//! transcription, plus the library pieces behind them.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running.

mod args;
mod commands;
mod config;
mod dataset;
mod train;

pub use args::{run, Cli, Command};
pub use commands::{cmd_dataset, cmd_eval, cmd_train, cmd_transcribe, load_model, TrainReport};
pub use config::{overfit_model, overfit_options, overfit_scores, ModelSize, RunConfig};
pub use dataset::{build_dataset, samples_for, Dataset, DatasetSummary, SPLIT_NAMES};
pub use train::{
    batch_gradient, batch_indices, train, Adam, TrainOptions, TrainOutcome, TrainPaths, TrainSample, TrainState,
};

use crate::codecs::CodecError;
use crate::diffcore::{CheckpointError, TensorError};
use crate::eval::EvalError;
use crate::ingest::IngestError;
use crate::model::ModelError;
use crate::render::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at step {step}; batch {ids:?}")]
    NonFinite { step: u64, ids: Vec<String> },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Checkpoint(e.to_string())
    }
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests;
