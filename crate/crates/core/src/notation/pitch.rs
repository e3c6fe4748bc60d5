use std::collections::HashMap;

use super::{Accidental, Clef, NotationError, PitchToken, StaffPosition, Step};

const SHARP_ORDER: [Step; 7] = [Step::F, Step::C, Step::G, Step::D, Step::A, Step::E, Step::B];
const FLAT_ORDER: [Step; 7] = [Step::B, Step::E, Step::A, Step::D, Step::G, Step::C, Step::F];

/// Alteration the key signature applies to `step`.
pub fn key_alteration(key: i8, step: Step) -> Accidental {
    let n = key.unsigned_abs() as usize;
    if key > 0 && SHARP_ORDER[..n.min(7)].contains(&step) {
        Accidental::Sharp
    } else if key < 0 && FLAT_ORDER[..n.min(7)].contains(&step) {
        Accidental::Flat
    } else {
        Accidental::None
    }
}

/// Pitch of a notehead at `position` under `clef`, given the key signature
/// and the accidental glyph printed next to it (`Accidental::None` if none).
pub fn position_to_pitch(
    clef: Clef,
    key: i8,
    explicit: Accidental,
    position: StaffPosition,
) -> Result<PitchToken, NotationError> {
    let diatonic = clef.bottom_line() + position.value();
    let step = Step::from_index(diatonic);
    let octave = diatonic.div_euclid(7);
    let octave = u8::try_from(octave).map_err(|_| NotationError::OctaveOutOfRange(octave.clamp(0, 255) as u8))?;
    let accidental = if explicit != Accidental::None {
        explicit
    } else {
        key_alteration(key, step)
    };
    PitchToken::note(step, octave, accidental)
}

/// Staff position of `pitch` under `clef`.
pub fn pitch_to_position(clef: Clef, pitch: &PitchToken) -> Result<StaffPosition, NotationError> {
    let diatonic = pitch.diatonic().ok_or(NotationError::RestHasNoPosition)?;
    StaffPosition::new(diatonic - clef.bottom_line()).map_err(|_| NotationError::NotPositionable {
        pitch: *pitch,
        clef,
    })
}

/// Key signature plus accidentals carried forward within the current measure.
///
/// An accidental glyph applies to every later note on the same step and
/// octave until the next barline or key change.
#[derive(Clone, Debug, Default)]
pub struct AccidentalContext {
    key: i8,
    carried: HashMap<(Step, u8), Accidental>,
}

impl AccidentalContext {
    pub fn new(key: i8) -> Self {
        Self {
            key,
            carried: HashMap::new(),
        }
    }

    pub fn key(&self) -> i8 {
        self.key
    }

    pub fn set_key(&mut self, key: i8) {
        self.key = key;
        self.carried.clear();
    }

    pub fn barline(&mut self) {
        self.carried.clear();
    }

    /// Alteration a note on `step`/`octave` sounds with when no glyph is printed.
    pub fn implied(&self, step: Step, octave: u8) -> Accidental {
        self.carried
            .get(&(step, octave))
            .copied()
            .unwrap_or_else(|| key_alteration(self.key, step))
    }

    /// Sounded alteration of a note printed with `glyph`; records the glyph
    /// for the rest of the measure.
    pub fn sound(&mut self, step: Step, octave: u8, glyph: Accidental) -> Accidental {
        if glyph == Accidental::None {
            self.implied(step, octave)
        } else {
            self.carried.insert((step, octave), glyph);
            glyph
        }
    }

    /// Glyph that must be printed for `pitch` to sound as labelled, updating
    /// the carried state the same way [`sound`](Self::sound) would.
    pub fn glyph_for(&mut self, pitch: &PitchToken) -> Result<Accidental, NotationError> {
        let PitchToken::Note {
            step,
            octave,
            accidental,
        } = *pitch
        else {
            return Ok(Accidental::None);
        };
        let implied = self.implied(step, octave);
        if accidental == implied {
            return Ok(Accidental::None);
        }
        if accidental == Accidental::None {
            // an unaltered sounding step can only be written with a natural
            return Err(NotationError::InconsistentAccidental { pitch: *pitch, implied });
        }
        self.carried.insert((step, octave), accidental);
        Ok(accidental)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(step: Step, octave: u8, accidental: Accidental) -> PitchToken {
        PitchToken::note(step, octave, accidental).unwrap()
    }

    fn pos(s: i32) -> StaffPosition {
        StaffPosition::new(s).unwrap()
    }

    #[test]
    fn clef_anchors() {
        let none = Accidental::None;
        assert_eq!(position_to_pitch(Clef::G2, 0, none, pos(0)).unwrap(), note(Step::E, 4, none));
        assert_eq!(position_to_pitch(Clef::G2, 0, none, pos(2)).unwrap(), note(Step::G, 4, none));
        assert_eq!(position_to_pitch(Clef::F4, 0, none, pos(8)).unwrap(), note(Step::A, 3, none));
        assert_eq!(position_to_pitch(Clef::F4, 0, none, pos(6)).unwrap(), note(Step::F, 3, none));
        assert_eq!(position_to_pitch(Clef::C3, 0, none, pos(4)).unwrap(), note(Step::C, 4, none));
        assert_eq!(position_to_pitch(Clef::C4, 0, none, pos(6)).unwrap(), note(Step::C, 4, none));
    }

    /// Independent table: which steps each key signature alters.
    fn key_table(key: i8) -> Vec<(char, Accidental)> {
        let sharps = "FCGDAEB";
        let flats = "BEADGCF";
        if key > 0 {
            sharps.chars().take(key as usize).map(|c| (c, Accidental::Sharp)).collect()
        } else {
            flats.chars().take((-key) as usize).map(|c| (c, Accidental::Flat)).collect()
        }
    }

    #[test]
    fn key_signature_alterations_match_lookup_table() {
        for key in -7..=7i8 {
            let table = key_table(key);
            for step in Step::ALL {
                let want = table
                    .iter()
                    .find(|(c, _)| *c == step.letter())
                    .map_or(Accidental::None, |(_, a)| *a);
                assert_eq!(key_alteration(key, step), want, "key {key} step {step:?}");
            }
        }
        // one sharp: s=1 under the G clef is F4, sounded sharp
        assert_eq!(
            position_to_pitch(Clef::G2, 1, Accidental::None, pos(1)).unwrap(),
            note(Step::F, 4, Accidental::Sharp)
        );
        // an explicit glyph overrides the key
        assert_eq!(
            position_to_pitch(Clef::G2, 1, Accidental::Natural, pos(1)).unwrap(),
            note(Step::F, 4, Accidental::Natural)
        );
    }

    #[test]
    fn pitch_to_position_examples() {
        assert_eq!(pitch_to_position(Clef::G2, &note(Step::E, 4, Accidental::None)).unwrap(), pos(0));
        assert_eq!(pitch_to_position(Clef::G2, &note(Step::C, 4, Accidental::None)).unwrap(), pos(-2));
        assert!(pitch_to_position(Clef::G2, &note(Step::C, 2, Accidental::None)).is_err());
        assert!(matches!(
            pitch_to_position(Clef::G2, &PitchToken::Rest),
            Err(NotationError::RestHasNoPosition)
        ));
    }

    #[test]
    fn out_of_range_position_is_rejected() {
        assert!(matches!(StaffPosition::new(17), Err(NotationError::PositionOutOfRange(17))));
        assert!(StaffPosition::new(-7).is_err());
    }

    #[test]
    fn position_and_pitch_are_mutually_inverse_for_every_clef() {
        let mut checked = 0;
        for clef in Clef::ALL {
            for p in StaffPosition::all() {
                for acc in Accidental::ALL {
                    let pitch = position_to_pitch(clef, 0, acc, p).unwrap();
                    assert_eq!(pitch_to_position(clef, &pitch).unwrap(), p);
                    assert_eq!(position_to_pitch(clef, 0, pitch.accidental(), p).unwrap(), pitch);
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 4 * 23 * 6);
    }

    #[test]
    fn carried_accidentals_last_until_barline() {
        let mut ctx = AccidentalContext::new(0);
        assert_eq!(ctx.sound(Step::F, 4, Accidental::Sharp), Accidental::Sharp);
        assert_eq!(ctx.sound(Step::F, 4, Accidental::None), Accidental::Sharp);
        // other octave unaffected
        assert_eq!(ctx.sound(Step::F, 5, Accidental::None), Accidental::None);
        ctx.barline();
        assert_eq!(ctx.sound(Step::F, 4, Accidental::None), Accidental::None);
    }

    #[test]
    fn glyph_for_inverts_sound() {
        let mut ctx = AccidentalContext::new(2);
        let f_sharp = note(Step::F, 4, Accidental::Sharp);
        assert_eq!(ctx.glyph_for(&f_sharp).unwrap(), Accidental::None);
        let f_nat = note(Step::F, 4, Accidental::Natural);
        assert_eq!(ctx.glyph_for(&f_nat).unwrap(), Accidental::Natural);
        // the natural now carries
        assert_eq!(ctx.glyph_for(&f_nat).unwrap(), Accidental::None);
        // an unaltered F cannot be written against the key
        let f_plain = note(Step::F, 5, Accidental::None);
        assert!(ctx.glyph_for(&f_plain).is_err());
    }
}
