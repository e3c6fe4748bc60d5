//! Conversions between [`SymbolicScore`](crate::notation::SymbolicScore) and
//! the three label encodings: advance-position pairs, flag configurations,
//! and the ten parallel sequences of the recurrent decoder.

mod advance;
mod flag;
mod multiseq;
mod records;

pub use advance::{decode_advance, encode_advance, AdvanceLabels};
pub use flag::{
    decode_flag, decode_flag_lenient, encode_flag, FlagConfiguration, FLAG_ACCIDENTAL_CLASSES, FLAG_RHYTHM_CLASSES,
    FLAG_ROWS, FLAG_STAFF_BITS, NO_NOTE_CLASS, REST_BITS,
};
pub use multiseq::{decode_multiseq, encode_multiseq, merge_streams, MultiSeqLabels, MULTISEQ_COUNT};
pub use records::{read_records, write_records, LabelRecord};

use crate::notation::{NotationError, RhythmToken, StaffPosition};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error(transparent)]
    Notation(#[from] NotationError),
    #[error("pitch and rhythm sequences differ in length ({pitch} vs {rhythm})")]
    LengthMismatch { pitch: usize, rhythm: usize },
    #[error("separator at index {index} is not mirrored in the other sequence")]
    SeparatorMismatch { index: usize },
    #[error("malformed event at index {index}: {reason}")]
    MalformedEvent { index: usize, reason: String },
    #[error("note at event {event} precedes any clef")]
    NoteBeforeClef { event: usize },
    #[error("more than two notes on staff position {position} at event {event}")]
    TooManyNotesOnPosition { event: usize, position: StaffPosition },
    #[error("rest {rhythm} at event {event} is dotted or duplicated and has no flag bit")]
    UnrepresentableRest { event: usize, rhythm: RhythmToken },
    #[error("event {event} carries {count} symbols, more than the {MULTISEQ_COUNT} sequences")]
    TooManySymbols { event: usize, count: usize },
    #[error("expected {MULTISEQ_COUNT} sequence pairs, found {0}")]
    SequenceCount(usize),
    #[error("bad flag configuration spelling `{0}`")]
    BadFlagSpelling(String),
    #[error("label record: {0}")]
    Record(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
