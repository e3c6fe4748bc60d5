//! Restricted music-notation symbol set: pitches, rhythms, staff symbols,
//! staff positions, label tokens and their vocabularies.

mod pitch;
mod score;
mod symbols;
mod tokens;
mod vocab;

pub use pitch::{key_alteration, pitch_to_position, position_to_pitch, AccidentalContext};
pub use score::{canonical_note_order, Note, ScoreEvent, SymbolicScore, MAX_NOTES_PER_POSITION};
pub use symbols::{
    Accidental, Clef, Duration, PitchToken, RhythmToken, StaffPosition, StaffSymbol, Step, TimeSignature,
    MAX_DOTS, MAX_KEY, MAX_OCTAVE, MAX_POSITION, MIN_POSITION, RHYTHM_CLASSES, STAFF_POSITIONS,
    STAFF_SYMBOL_COUNT, TIME_DENOMINATORS, TIME_NUMERATORS,
};
pub use tokens::{join_tokens, parse_tokens, Token, NO_NOTE, SEPARATOR};
pub use vocab::{pitch_inventory, VocabKind, Vocabulary, BLANK, PITCH_TOKENS};

/// Number of accidental classes.
pub const ACCIDENTAL_CLASSES: usize = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NotationError {
    #[error("octave {0} outside 0..=8")]
    OctaveOutOfRange(u8),
    #[error("{0} dots exceeds the maximum of 2")]
    TooManyDots(u8),
    #[error("unsupported time signature {0}/{1}")]
    UnsupportedTimeSignature(u8, u8),
    #[error("key signature {0} outside -7..=7 or zero")]
    InvalidKeySignature(i8),
    #[error("staff position {0} outside -6..=16")]
    PositionOutOfRange(i32),
    #[error("a rest has no staff position")]
    RestHasNoPosition,
    #[error("{pitch} cannot be placed on the staff under clef {}", clef.name())]
    NotPositionable { pitch: PitchToken, clef: Clef },
    #[error("{pitch} cannot be written when the context implies {implied:?}")]
    InconsistentAccidental { pitch: PitchToken, implied: Accidental },
    #[error("unknown token spelling `{0}`")]
    UnknownToken(String),
    #[error("token `{0}` is not in this vocabulary")]
    NotInVocabulary(String),
    #[error("token index {0} is blank or out of range")]
    BadTokenIndex(usize),
    #[error("invalid score at event {event}: {reason}")]
    InvalidScore { event: usize, reason: String },
}
