//! Canonical text spelling of label tokens.
//!
//! ```text
//! token     := staff | "+" | "noNote" | pitch | rhythm | pitch "_" rhythm
//! staff     := "clef-" ("G2" | "F4" | "C3" | "C4")
//!            | "keysig-" int            (int in -7..=7, not 0)
//!            | "timesig-" num "/" den   (num in 2,3,4,5,6,7,9,12; den in 2,4,8)
//!            | "barline"
//! pitch     := "note-" step octave acc | "rest"
//! step      := "A" .. "G"
//! octave    := "0" .. "8"
//! acc       := "" | "#" | "b" | "N" | "##" | "bb"
//! rhythm    := ("whole" | "half" | "quarter" | "eighth" | "16th" | "32nd" | "64th") "."{0,2}
//! ```
//!
//! Examples: `clef-G2`, `keysig--2`, `timesig-6/8`, `note-C4#`, `quarter.`,
//! `note-C4#_quarter.`, `rest_eighth`.

use std::fmt;
use std::str::FromStr;

use super::{
    Accidental, Clef, Duration, NotationError, PitchToken, RhythmToken, StaffSymbol, Step, TimeSignature,
};

pub const SEPARATOR: &str = "+";
pub const NO_NOTE: &str = "noNote";

/// One label symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Staff(StaffSymbol),
    /// `+` between consecutive events.
    Separator,
    /// Empty slot of a parallel sequence.
    NoNote,
    Pitch(PitchToken),
    Rhythm(RhythmToken),
    Note(PitchToken, RhythmToken),
}

impl fmt::Display for StaffSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StaffSymbol::Clef(c) => write!(f, "clef-{}", c.name()),
            StaffSymbol::KeySignature(k) => write!(f, "keysig-{k}"),
            StaffSymbol::TimeSignature(t) => write!(f, "timesig-{}/{}", t.beats(), t.beat_type()),
            StaffSymbol::Barline => f.write_str("barline"),
        }
    }
}

impl fmt::Display for PitchToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PitchToken::Rest => f.write_str("rest"),
            PitchToken::Note {
                step,
                octave,
                accidental,
            } => write!(f, "note-{}{}{}", step.letter(), octave, accidental.suffix()),
        }
    }
}

impl fmt::Display for RhythmToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.duration.name())?;
        for _ in 0..self.dots {
            f.write_str(".")?;
        }
        Ok(())
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Staff(s) => s.fmt(f),
            Token::Separator => f.write_str(SEPARATOR),
            Token::NoNote => f.write_str(NO_NOTE),
            Token::Pitch(p) => p.fmt(f),
            Token::Rhythm(r) => r.fmt(f),
            Token::Note(p, r) => write!(f, "{p}_{r}"),
        }
    }
}

fn unknown(s: &str) -> NotationError {
    NotationError::UnknownToken(s.to_string())
}

impl FromStr for StaffSymbol {
    type Err = NotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "barline" {
            return Ok(StaffSymbol::Barline);
        }
        if let Some(c) = s.strip_prefix("clef-") {
            return Clef::ALL
                .into_iter()
                .find(|k| k.name() == c)
                .map(StaffSymbol::Clef)
                .ok_or_else(|| unknown(s));
        }
        if let Some(k) = s.strip_prefix("keysig-") {
            if k.starts_with('+') || k.starts_with("-0") || k.starts_with('0') {
                return Err(unknown(s));
            }
            let k: i8 = k.parse().map_err(|_| unknown(s))?;
            return StaffSymbol::key(k).map_err(|_| unknown(s));
        }
        if let Some(t) = s.strip_prefix("timesig-") {
            let (n, d) = t.split_once('/').ok_or_else(|| unknown(s))?;
            let parse = |x: &str| -> Result<u8, NotationError> {
                if x.starts_with('+') || x.starts_with('0') {
                    return Err(unknown(s));
                }
                x.parse().map_err(|_| unknown(s))
            };
            return TimeSignature::new(parse(n)?, parse(d)?)
                .map(StaffSymbol::TimeSignature)
                .map_err(|_| unknown(s));
        }
        Err(unknown(s))
    }
}

impl FromStr for PitchToken {
    type Err = NotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "rest" {
            return Ok(PitchToken::Rest);
        }
        let body = s.strip_prefix("note-").ok_or_else(|| unknown(s))?;
        let mut chars = body.chars();
        let step = chars.next().and_then(Step::from_letter).ok_or_else(|| unknown(s))?;
        let octave = chars
            .next()
            .and_then(|c| c.to_digit(10))
            .ok_or_else(|| unknown(s))?;
        let accidental = Accidental::from_suffix(chars.as_str()).ok_or_else(|| unknown(s))?;
        PitchToken::note(step, octave as u8, accidental).map_err(|_| unknown(s))
    }
}

impl FromStr for RhythmToken {
    type Err = NotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let base = s.trim_end_matches('.');
        let dots = s.len() - base.len();
        let duration = Duration::from_name(base).ok_or_else(|| unknown(s))?;
        u8::try_from(dots)
            .ok()
            .and_then(|d| RhythmToken::new(duration, d).ok())
            .ok_or_else(|| unknown(s))
    }
}

impl FromStr for Token {
    type Err = NotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            SEPARATOR => return Ok(Token::Separator),
            NO_NOTE => return Ok(Token::NoNote),
            _ => {}
        }
        if let Some((p, r)) = s.split_once('_') {
            return Ok(Token::Note(p.parse().map_err(|_| unknown(s))?, r.parse().map_err(|_| unknown(s))?));
        }
        if let Ok(st) = s.parse::<StaffSymbol>() {
            return Ok(Token::Staff(st));
        }
        if let Ok(p) = s.parse::<PitchToken>() {
            return Ok(Token::Pitch(p));
        }
        if let Ok(r) = s.parse::<RhythmToken>() {
            return Ok(Token::Rhythm(r));
        }
        Err(unknown(s))
    }
}

impl serde::Serialize for Token {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Spells tokens separated by single spaces.
pub fn join_tokens(tokens: &[Token]) -> String {
    tokens.iter().map(Token::to_string).collect::<Vec<_>>().join(" ")
}

/// Parses a whitespace-separated token line.
pub fn parse_tokens(line: &str) -> Result<Vec<Token>, NotationError> {
    line.split_whitespace().map(str::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_spellings() {
        let cases = [
            "clef-G2",
            "keysig-3",
            "keysig--2",
            "timesig-6/8",
            "barline",
            "note-C4#_quarter.",
            "rest_eighth",
            "+",
            "noNote",
            "note-E4",
            "note-B3bb",
            "note-F5N",
            "16th..",
            "rest",
        ];
        for c in cases {
            let t: Token = c.parse().unwrap_or_else(|e| panic!("{c}: {e}"));
            assert_eq!(t.to_string(), c);
        }
    }

    #[test]
    fn unknown_spellings_are_rejected() {
        for bad in [
            "clef-G1",
            "keysig-0",
            "keysig-8",
            "keysig-+3",
            "timesig-4/3",
            "timesig-04/4",
            "note-H4",
            "note-C9",
            "note-C4x",
            "quarter...",
            "quarters",
            "note-C4_",
            "_quarter",
            "",
            "Barline",
        ] {
            assert!(bad.parse::<Token>().is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn token_lines_round_trip() {
        let line = "clef-G2 + note-E4 note-G4 + barline";
        assert_eq!(join_tokens(&parse_tokens(line).unwrap()), line);
    }
}
