//! Connectionist temporal classification: the log-space dynamic program,
//! an exhaustive oracle, the flag-configuration lattice, the three training
//! losses and greedy decoding.

mod brute;
mod dp;
mod flag;
mod greedy;
mod loss;

pub use brute::{collapse, ctc_bruteforce, BRUTE_FORCE_MAX_FRAMES};
pub use dp::{ctc_nll, ctc_nll_with_grad, min_frames};
pub use flag::{flag_lattice, flag_symbol_logprob, FlagActivation, FlagSpace, FlagSymbol};
pub use greedy::{flag_argmax, flag_threshold, greedy_decode, greedy_decode_flag};
pub use loss::{ctc_loss, loss_baseline, loss_flag, loss_rnn, SequenceTargets};

use crate::diffcore::TensorError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CtcError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("target contains the blank symbol")]
    BlankInTarget,
    #[error("target index {index} outside a vocabulary of {classes} classes")]
    TargetOutOfVocabulary { index: usize, classes: usize },
    #[error("lattice of {len} entries is not {frames} x {classes}")]
    LatticeShape { len: usize, frames: usize, classes: usize },
    #[error("target needs at least {needed} frames, lattice has {frames}")]
    Infeasible { frames: usize, needed: usize },
    #[error("exhaustive enumeration limited to {BRUTE_FORCE_MAX_FRAMES} frames, got {0}")]
    TooManyFrames(usize),
    #[error("flag symbol does not fit the flag space")]
    SymbolOutsideSpace,
    #[error("{outputs} decoder streams for {targets} target streams")]
    StreamCount { outputs: usize, targets: usize },
}
