use std::collections::HashMap;

use super::{Accidental, Clef, NotationError, PitchToken, RhythmToken, StaffSymbol, Step, Token, MAX_POSITION, MIN_POSITION};

/// Reserved CTC blank index in every vocabulary.
pub const BLANK: usize = 0;

/// Which label stream a vocabulary serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VocabKind {
    /// Staff symbols, `+`, pitch tokens.
    AdvancePitch,
    /// Staff symbols, `+`, rhythm tokens.
    AdvanceRhythm,
    /// Staff symbols, `noNote`, pitch tokens.
    MultiSeqPitch,
    /// Staff symbols, `noNote`, rhythm tokens.
    MultiSeqRhythm,
}

/// Lowest and highest diatonic number reachable from some clef.
fn diatonic_range() -> (i32, i32) {
    let lo = Clef::ALL.iter().map(|c| c.bottom_line()).min().unwrap() + MIN_POSITION;
    let hi = Clef::ALL.iter().map(|c| c.bottom_line()).max().unwrap() + MAX_POSITION;
    (lo, hi)
}

/// Rest plus every pitch positionable under at least one clef, all
/// accidentals, low to high.
pub fn pitch_inventory() -> Vec<PitchToken> {
    let (lo, hi) = diatonic_range();
    let mut out = vec![PitchToken::Rest];
    for d in lo..=hi {
        for acc in Accidental::ALL {
            out.push(PitchToken::Note {
                step: Step::from_index(d),
                octave: d.div_euclid(7) as u8,
                accidental: acc,
            });
        }
    }
    out
}

/// Distinct pitch tokens (including rest).
pub const PITCH_TOKENS: usize = 1 + 35 * 6;

/// Token inventory with index 0 reserved for blank.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    kind: VocabKind,
    tokens: Vec<Token>,
    lookup: HashMap<Token, usize>,
}

impl Vocabulary {
    pub fn new(kind: VocabKind) -> Self {
        let mut tokens: Vec<Token> = StaffSymbol::all().into_iter().map(Token::Staff).collect();
        tokens.push(match kind {
            VocabKind::AdvancePitch | VocabKind::AdvanceRhythm => Token::Separator,
            VocabKind::MultiSeqPitch | VocabKind::MultiSeqRhythm => Token::NoNote,
        });
        match kind {
            VocabKind::AdvancePitch | VocabKind::MultiSeqPitch => {
                tokens.extend(pitch_inventory().into_iter().map(Token::Pitch))
            }
            VocabKind::AdvanceRhythm | VocabKind::MultiSeqRhythm => {
                tokens.extend(RhythmToken::all().map(Token::Rhythm))
            }
        }
        let lookup = tokens.iter().enumerate().map(|(i, t)| (*t, i + 1)).collect();
        Self { kind, tokens, lookup }
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    /// Number of classes including blank.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn index(&self, token: &Token) -> Result<usize, NotationError> {
        self.lookup
            .get(token)
            .copied()
            .ok_or_else(|| NotationError::NotInVocabulary(token.to_string()))
    }

    /// `None` for blank or out-of-range indices.
    pub fn token(&self, index: usize) -> Option<Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i)).copied()
    }

    pub fn encode(&self, tokens: &[Token]) -> Result<Vec<usize>, NotationError> {
        tokens.iter().map(|t| self.index(t)).collect()
    }

    /// Maps indices back to tokens; blank or unknown indices are errors.
    pub fn decode(&self, indices: &[usize]) -> Result<Vec<Token>, NotationError> {
        indices
            .iter()
            .map(|&i| self.token(i).ok_or(NotationError::BadTokenIndex(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::{pitch_to_position, STAFF_SYMBOL_COUNT};

    #[test]
    fn sizes() {
        assert_eq!(pitch_inventory().len(), PITCH_TOKENS);
        assert_eq!(Vocabulary::new(VocabKind::AdvancePitch).size(), 1 + STAFF_SYMBOL_COUNT + 1 + PITCH_TOKENS);
        assert_eq!(Vocabulary::new(VocabKind::AdvanceRhythm).size(), 1 + 43 + 1 + 21);
        assert_eq!(Vocabulary::new(VocabKind::MultiSeqRhythm).size(), 66);
    }

    #[test]
    fn every_inventory_pitch_is_positionable_somewhere() {
        for p in pitch_inventory().into_iter().skip(1) {
            assert!(Clef::ALL.iter().any(|c| pitch_to_position(*c, &p).is_ok()), "{p}");
        }
    }

    #[test]
    fn index_round_trip_and_blank() {
        for kind in [
            VocabKind::AdvancePitch,
            VocabKind::AdvanceRhythm,
            VocabKind::MultiSeqPitch,
            VocabKind::MultiSeqRhythm,
        ] {
            let v = Vocabulary::new(kind);
            assert_eq!(v.token(BLANK), None);
            for i in 1..v.size() {
                assert_eq!(v.index(&v.token(i).unwrap()).unwrap(), i);
            }
            assert_eq!(v.token(v.size()), None);
        }
        let v = Vocabulary::new(VocabKind::AdvancePitch);
        assert!(v.index(&Token::NoNote).is_err());
        assert!(v.index(&Token::Rhythm(RhythmToken::plain(super::super::Duration::Half))).is_err());
    }
}
