//! MusicXML ingestion, corpus statistics, filtering and splitting.
//!
//! Supported MusicXML subset (everything else is skipped): `note`, `chord`,
//! `pitch`, `rest`, `type`, `dot`, `accidental`, `voice`, `duration`,
//! `backup`, `forward`, `attributes` (`divisions`, `clef`, `key`, `time`) and
//! measure boundaries. Tuplets (`time-modification`) reject the sample.

mod musicxml;
mod stats;
mod write;

pub use musicxml::{parse_musicxml, ParsedScore};
pub use stats::{
    compute_stats, dataset_filter, hard_filter, hard_filter_at, is_polyphonic, split, split_fractions, CorpusStats,
    Density, Exclusion, Sample, SampleStats, Split, Summary, HARD_DENSITY, SPLIT_FRACTIONS,
};
pub use write::to_musicxml;

use std::fmt;

use crate::notation::NotationError;

/// Why a well-formed document cannot become a training sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Tuplet,
    MultiPart,
    MultiStaff,
    Timewise,
    UnsupportedClef,
    KeyCancel,
    UnsupportedTime,
    UnsupportedDuration,
    BadVoice,
    MissingClef,
    PitchOutOfRange,
    Crowded,
    Empty,
}

impl RejectReason {
    /// Stable reason code used in reports.
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::Tuplet => "tuplet",
            RejectReason::MultiPart => "multi-part",
            RejectReason::MultiStaff => "multi-staff",
            RejectReason::Timewise => "timewise",
            RejectReason::UnsupportedClef => "unsupported-clef",
            RejectReason::KeyCancel => "key-cancel",
            RejectReason::UnsupportedTime => "unsupported-time",
            RejectReason::UnsupportedDuration => "unsupported-duration",
            RejectReason::BadVoice => "bad-voice",
            RejectReason::MissingClef => "missing-clef",
            RejectReason::PitchOutOfRange => "pitch-out-of-range",
            RejectReason::Crowded => "crowded",
            RejectReason::Empty => "empty",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed MusicXML at {line}:{col}: {message}")]
    Xml { line: u32, col: u32, message: String },
    #[error("rejected ({reason}) in measure {measure}: {detail}")]
    Rejected {
        reason: RejectReason,
        measure: usize,
        detail: String,
    },
    #[error(transparent)]
    Notation(#[from] NotationError),
    #[error("corpus has no usable samples")]
    EmptyCorpus,
    #[error("split needs at least 10 samples, got {0}")]
    TooSmall(usize),
    #[error("split fractions {0:?} must be non-negative and sum to 1")]
    BadFractions([f64; 3]),
}

impl IngestError {
    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            IngestError::Rejected { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}
