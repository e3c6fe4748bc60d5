use std::fmt;

use serde::{Deserialize, Serialize};

use super::NotationError;

/// Diatonic step letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub const ALL: [Step; 7] = [Step::C, Step::D, Step::E, Step::F, Step::G, Step::A, Step::B];

    /// 0 for C up to 6 for B.
    pub fn index(self) -> i32 {
        self as i32
    }

    pub fn from_index(i: i32) -> Step {
        Step::ALL[i.rem_euclid(7) as usize]
    }

    pub fn letter(self) -> char {
        b"CDEFGAB"[self as usize] as char
    }

    pub fn from_letter(c: char) -> Option<Step> {
        "CDEFGAB".find(c).map(|i| Step::ALL[i])
    }
}

/// Accidental attached to a note. As a glyph, `None` means no sign is
/// printed; as the sounded alteration of a [`PitchToken`], `None` means the
/// unaltered step with no natural sign in force.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Accidental {
    #[default]
    None,
    Sharp,
    Flat,
    Natural,
    DoubleSharp,
    DoubleFlat,
}

impl Accidental {
    pub const ALL: [Accidental; 6] = [
        Accidental::None,
        Accidental::Sharp,
        Accidental::Flat,
        Accidental::Natural,
        Accidental::DoubleSharp,
        Accidental::DoubleFlat,
    ];

    /// Class index used by the flag note matrix.
    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(i: usize) -> Option<Accidental> {
        Accidental::ALL.get(i).copied()
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Accidental::None => "",
            Accidental::Sharp => "#",
            Accidental::Flat => "b",
            Accidental::Natural => "N",
            Accidental::DoubleSharp => "##",
            Accidental::DoubleFlat => "bb",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Accidental> {
        Accidental::ALL.into_iter().find(|a| a.suffix() == s)
    }

    /// Semitone alteration.
    pub fn alter(self) -> i32 {
        match self {
            Accidental::None | Accidental::Natural => 0,
            Accidental::Sharp => 1,
            Accidental::Flat => -1,
            Accidental::DoubleSharp => 2,
            Accidental::DoubleFlat => -2,
        }
    }
}

pub const MAX_OCTAVE: u8 = 8;

/// Pitch label of one note, or a rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PitchToken {
    Rest,
    Note {
        step: Step,
        octave: u8,
        accidental: Accidental,
    },
}

impl PitchToken {
    pub fn note(step: Step, octave: u8, accidental: Accidental) -> Result<Self, NotationError> {
        if octave > MAX_OCTAVE {
            return Err(NotationError::OctaveOutOfRange(octave));
        }
        Ok(PitchToken::Note {
            step,
            octave,
            accidental,
        })
    }

    pub fn is_rest(&self) -> bool {
        matches!(self, PitchToken::Rest)
    }

    /// `7 * octave + step`, ignoring the accidental.
    pub fn diatonic(&self) -> Option<i32> {
        match *self {
            PitchToken::Rest => None,
            PitchToken::Note { step, octave, .. } => Some(7 * octave as i32 + step.index()),
        }
    }

    pub fn accidental(&self) -> Accidental {
        match *self {
            PitchToken::Rest => Accidental::None,
            PitchToken::Note { accidental, .. } => accidental,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Duration {
    Whole,
    Half,
    Quarter,
    Eighth,
    Sixteenth,
    ThirtySecond,
    SixtyFourth,
}

impl Duration {
    pub const ALL: [Duration; 7] = [
        Duration::Whole,
        Duration::Half,
        Duration::Quarter,
        Duration::Eighth,
        Duration::Sixteenth,
        Duration::ThirtySecond,
        Duration::SixtyFourth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Duration::Whole => "whole",
            Duration::Half => "half",
            Duration::Quarter => "quarter",
            Duration::Eighth => "eighth",
            Duration::Sixteenth => "16th",
            Duration::ThirtySecond => "32nd",
            Duration::SixtyFourth => "64th",
        }
    }

    pub fn from_name(s: &str) -> Option<Duration> {
        Duration::ALL.into_iter().find(|d| d.name() == s)
    }

    /// Length in 256th notes.
    pub fn ticks(self) -> u32 {
        256 >> self.index()
    }

    /// Flags drawn on the stem (0 for quarter and longer).
    pub fn flag_count(self) -> usize {
        self.index().saturating_sub(2)
    }
}

pub const MAX_DOTS: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RhythmToken {
    pub duration: Duration,
    pub dots: u8,
}

impl RhythmToken {
    pub fn new(duration: Duration, dots: u8) -> Result<Self, NotationError> {
        if dots > MAX_DOTS {
            return Err(NotationError::TooManyDots(dots));
        }
        Ok(Self { duration, dots })
    }

    pub const fn plain(duration: Duration) -> Self {
        Self { duration, dots: 0 }
    }

    /// Every representable rhythm, longest base first.
    pub fn all() -> impl Iterator<Item = RhythmToken> {
        Duration::ALL
            .into_iter()
            .flat_map(|d| (0..=MAX_DOTS).map(move |dots| RhythmToken { duration: d, dots }))
    }

    /// Dense index in `0..21`.
    pub fn class(self) -> usize {
        self.duration.index() * (MAX_DOTS as usize + 1) + self.dots as usize
    }

    pub fn from_class(i: usize) -> Option<RhythmToken> {
        let per = MAX_DOTS as usize + 1;
        let duration = *Duration::ALL.get(i / per)?;
        Some(RhythmToken {
            duration,
            dots: (i % per) as u8,
        })
    }

    /// Length in 256th notes (exact for up to two dots on a 64th).
    pub fn ticks(self) -> u32 {
        let base = self.duration.ticks();
        (0..=self.dots as u32).map(|k| base >> k).sum()
    }
}

pub const RHYTHM_CLASSES: usize = 7 * (MAX_DOTS as usize + 1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Clef {
    G2,
    F4,
    C3,
    C4,
}

impl Clef {
    pub const ALL: [Clef; 4] = [Clef::G2, Clef::F4, Clef::C3, Clef::C4];

    pub fn name(self) -> &'static str {
        match self {
            Clef::G2 => "G2",
            Clef::F4 => "F4",
            Clef::C3 => "C3",
            Clef::C4 => "C4",
        }
    }

    /// Diatonic number (`7 * octave + step`) of the bottom staff line.
    pub fn bottom_line(self) -> i32 {
        match self {
            // E4
            Clef::G2 => 30,
            // G2
            Clef::F4 => 18,
            // F3
            Clef::C3 => 24,
            // D3
            Clef::C4 => 22,
        }
    }
}

pub const TIME_NUMERATORS: [u8; 8] = [2, 3, 4, 5, 6, 7, 9, 12];
pub const TIME_DENOMINATORS: [u8; 3] = [2, 4, 8];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeSignature {
    beats: u8,
    beat_type: u8,
}

impl TimeSignature {
    pub fn new(beats: u8, beat_type: u8) -> Result<Self, NotationError> {
        if !TIME_NUMERATORS.contains(&beats) || !TIME_DENOMINATORS.contains(&beat_type) {
            return Err(NotationError::UnsupportedTimeSignature(beats, beat_type));
        }
        Ok(Self { beats, beat_type })
    }

    pub fn beats(self) -> u8 {
        self.beats
    }

    pub fn beat_type(self) -> u8 {
        self.beat_type
    }

    /// Measure length in 256th notes.
    pub fn measure_ticks(self) -> u32 {
        self.beats as u32 * (256 / self.beat_type as u32)
    }
}

pub const MAX_KEY: i8 = 7;

/// Non-note notation symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StaffSymbol {
    Clef(Clef),
    /// Number of sharps (positive) or flats (negative); never zero.
    KeySignature(i8),
    TimeSignature(TimeSignature),
    Barline,
}

/// 4 clefs + 14 key signatures + 24 time signatures + barline.
pub const STAFF_SYMBOL_COUNT: usize = 4 + 14 + TIME_NUMERATORS.len() * TIME_DENOMINATORS.len() + 1;

impl StaffSymbol {
    pub fn key(k: i8) -> Result<Self, NotationError> {
        if k == 0 || k.abs() > MAX_KEY {
            return Err(NotationError::InvalidKeySignature(k));
        }
        Ok(StaffSymbol::KeySignature(k))
    }

    /// All staff symbols in index order.
    pub fn all() -> Vec<StaffSymbol> {
        let mut v: Vec<StaffSymbol> = Clef::ALL.into_iter().map(StaffSymbol::Clef).collect();
        v.extend((-MAX_KEY..=MAX_KEY).filter(|&k| k != 0).map(StaffSymbol::KeySignature));
        for n in TIME_NUMERATORS {
            for d in TIME_DENOMINATORS {
                v.push(StaffSymbol::TimeSignature(TimeSignature { beats: n, beat_type: d }));
            }
        }
        v.push(StaffSymbol::Barline);
        v
    }

    /// Dense index in `0..STAFF_SYMBOL_COUNT`.
    pub fn index(self) -> usize {
        match self {
            StaffSymbol::Clef(c) => c as usize,
            StaffSymbol::KeySignature(k) => {
                let off = if k < 0 { k + MAX_KEY } else { k + MAX_KEY - 1 };
                4 + off as usize
            }
            StaffSymbol::TimeSignature(t) => {
                let n = TIME_NUMERATORS.iter().position(|&x| x == t.beats).unwrap();
                let d = TIME_DENOMINATORS.iter().position(|&x| x == t.beat_type).unwrap();
                18 + n * TIME_DENOMINATORS.len() + d
            }
            StaffSymbol::Barline => STAFF_SYMBOL_COUNT - 1,
        }
    }

    pub fn from_index(i: usize) -> Option<StaffSymbol> {
        StaffSymbol::all().get(i).copied()
    }
}

pub const MIN_POSITION: i32 = -6;
pub const MAX_POSITION: i32 = 16;
/// Number of staff positions a notehead can occupy.
pub const STAFF_POSITIONS: usize = (MAX_POSITION - MIN_POSITION + 1) as usize;

/// Vertical slot on the staff: 0 is the bottom line, 8 the top line, odd
/// values are spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StaffPosition(i8);

impl StaffPosition {
    pub fn new(s: i32) -> Result<Self, NotationError> {
        if !(MIN_POSITION..=MAX_POSITION).contains(&s) {
            return Err(NotationError::PositionOutOfRange(s));
        }
        Ok(Self(s as i8))
    }

    pub fn value(self) -> i32 {
        self.0 as i32
    }

    /// Dense index in `0..STAFF_POSITIONS`.
    pub fn index(self) -> usize {
        (self.0 as i32 - MIN_POSITION) as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < STAFF_POSITIONS).then(|| Self((i as i32 + MIN_POSITION) as i8))
    }

    pub fn all() -> impl Iterator<Item = StaffPosition> {
        (MIN_POSITION..=MAX_POSITION).map(|s| StaffPosition(s as i8))
    }

    /// Outside the five lines, so ledger lines are needed.
    pub fn needs_ledger(self) -> bool {
        (self.0 as i32 - 4).abs() > 4
    }
}

impl fmt::Display for StaffPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
