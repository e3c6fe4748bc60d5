use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CodecError;
use crate::notation::{
    position_to_pitch, Accidental, AccidentalContext, Clef, Duration, Note, PitchToken, RhythmToken, ScoreEvent,
    StaffPosition, StaffSymbol, SymbolicScore, ACCIDENTAL_CLASSES, RHYTHM_CLASSES, STAFF_POSITIONS, STAFF_SYMBOL_COUNT,
};

/// One bit per undotted rest duration.
pub const REST_BITS: usize = 7;
/// Staff symbols followed by rest durations.
pub const FLAG_STAFF_BITS: usize = STAFF_SYMBOL_COUNT + REST_BITS;
/// Two rows per staff position.
pub const FLAG_ROWS: usize = 2 * STAFF_POSITIONS;
/// `noNote` plus every rhythm class.
pub const FLAG_RHYTHM_CLASSES: usize = RHYTHM_CLASSES + 1;
pub const FLAG_ACCIDENTAL_CLASSES: usize = ACCIDENTAL_CLASSES;
/// Rhythm class of an empty row.
pub const NO_NOTE_CLASS: u8 = 0;

/// One symbol of the flag alphabet: a staff/rest bit vector plus a note
/// matrix of (rhythm class, accidental glyph class) rows.
///
/// Rhythm class 0 is `noNote`; class `c + 1` is rhythm class `c`. Row
/// `2 * i` belongs to position index `i` and is filled before row `2 * i + 1`.
/// Empty rows always hold accidental class 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlagConfiguration {
    staff: u64,
    rows: [(u8, u8); FLAG_ROWS],
}

impl Default for FlagConfiguration {
    fn default() -> Self {
        Self::blank()
    }
}

impl FlagConfiguration {
    /// The all-off configuration.
    pub fn blank() -> Self {
        Self {
            staff: 0,
            rows: [(NO_NOTE_CLASS, 0); FLAG_ROWS],
        }
    }

    pub fn is_blank(&self) -> bool {
        *self == Self::blank()
    }

    pub fn bit(&self, i: usize) -> bool {
        i < FLAG_STAFF_BITS && self.staff >> i & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, on: bool) {
        assert!(i < FLAG_STAFF_BITS, "staff bit {i} out of range");
        if on {
            self.staff |= 1 << i;
        } else {
            self.staff &= !(1 << i);
        }
    }

    /// `(rhythm class, accidental class)` of `row`.
    pub fn row(&self, row: usize) -> (u8, u8) {
        self.rows[row]
    }

    /// Sets a row; an empty rhythm class forces accidental class 0.
    pub fn set_row(&mut self, row: usize, rhythm: u8, accidental: u8) {
        assert!((rhythm as usize) < FLAG_RHYTHM_CLASSES && (accidental as usize) < FLAG_ACCIDENTAL_CLASSES);
        self.rows[row] = if rhythm == NO_NOTE_CLASS { (NO_NOTE_CLASS, 0) } else { (rhythm, accidental) };
    }

    pub fn staff_bits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..FLAG_STAFF_BITS).filter(|&i| self.bit(i))
    }

    pub fn occupied_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..FLAG_ROWS).filter(|&r| self.rows[r].0 != NO_NOTE_CLASS)
    }
}

fn rest_bit(d: Duration) -> usize {
    STAFF_SYMBOL_COUNT + d.index()
}

/// One configuration per event. Accidental rows hold the printed glyph,
/// so carried accidentals are resolved against the measure context.
pub fn encode_flag(score: &SymbolicScore) -> Result<Vec<FlagConfiguration>, CodecError> {
    let mut ctx = AccidentalContext::new(0);
    let mut clef: Option<Clef> = None;
    let mut out = Vec::with_capacity(score.len());
    for (ei, event) in score.events.iter().enumerate() {
        let mut cfg = FlagConfiguration::blank();
        match event {
            ScoreEvent::Staff(s) => {
                match *s {
                    StaffSymbol::Clef(c) => clef = Some(c),
                    StaffSymbol::KeySignature(k) => ctx.set_key(k),
                    StaffSymbol::Barline => ctx.barline(),
                    StaffSymbol::TimeSignature(_) => {}
                }
                cfg.set_bit(s.index(), true);
            }
            ScoreEvent::Notes(notes) => {
                for n in notes {
                    match n.pitch {
                        PitchToken::Rest => {
                            let bit = rest_bit(n.rhythm.duration);
                            if n.rhythm.dots > 0 || cfg.bit(bit) {
                                return Err(CodecError::UnrepresentableRest {
                                    event: ei,
                                    rhythm: n.rhythm,
                                });
                            }
                            cfg.set_bit(bit, true);
                        }
                        pitch => {
                            let c = clef.ok_or(CodecError::NoteBeforeClef { event: ei })?;
                            let pos = crate::notation::pitch_to_position(c, &pitch)?;
                            let base = 2 * pos.index();
                            let row = if cfg.rows[base].0 == NO_NOTE_CLASS {
                                base
                            } else if cfg.rows[base + 1].0 == NO_NOTE_CLASS {
                                base + 1
                            } else {
                                return Err(CodecError::TooManyNotesOnPosition {
                                    event: ei,
                                    position: pos,
                                });
                            };
                            let glyph = ctx.glyph_for(&pitch)?;
                            cfg.set_row(row, n.rhythm.class() as u8 + 1, glyph.class() as u8);
                        }
                    }
                }
            }
        }
        out.push(cfg);
    }
    Ok(out)
}

/// Inverse of [`encode_flag`]. All-off configurations are skipped; each
/// configuration must hold exactly one staff symbol or a note group.
pub fn decode_flag(configs: &[FlagConfiguration]) -> Result<SymbolicScore, CodecError> {
    decode(configs, false)
}

/// Decoder for model output: a configuration mixing staff symbols and notes
/// yields the staff symbols (in bit order) followed by the note group, and
/// notes before any clef are read under the treble clef.
pub fn decode_flag_lenient(configs: &[FlagConfiguration]) -> SymbolicScore {
    decode(configs, true).expect("lenient flag decoding is total")
}

fn decode(configs: &[FlagConfiguration], lenient: bool) -> Result<SymbolicScore, CodecError> {
    let mut ctx = AccidentalContext::new(0);
    let mut clef: Option<Clef> = None;
    let mut events = Vec::new();
    for (ci, cfg) in configs.iter().enumerate() {
        if cfg.is_blank() {
            continue;
        }
        let staff: Vec<StaffSymbol> = cfg
            .staff_bits()
            .filter(|&i| i < STAFF_SYMBOL_COUNT)
            .filter_map(StaffSymbol::from_index)
            .collect();
        let has_notes = cfg.staff_bits().any(|i| i >= STAFF_SYMBOL_COUNT) || cfg.occupied_rows().next().is_some();
        if !lenient && (staff.len() > 1 || (!staff.is_empty() && has_notes)) {
            return Err(CodecError::MalformedEvent {
                index: ci,
                reason: "configuration mixes several symbols".into(),
            });
        }
        for s in staff {
            match s {
                StaffSymbol::Clef(c) => clef = Some(c),
                StaffSymbol::KeySignature(k) => ctx.set_key(k),
                StaffSymbol::Barline => ctx.barline(),
                StaffSymbol::TimeSignature(_) => {}
            }
            events.push(ScoreEvent::Staff(s));
        }
        if !has_notes {
            continue;
        }
        let mut notes = Vec::new();
        for d in Duration::ALL {
            if cfg.bit(rest_bit(d)) {
                notes.push(Note::rest(RhythmToken::plain(d), 0));
            }
        }
        for row in cfg.occupied_rows() {
            let c = match (clef, lenient) {
                (Some(c), _) => c,
                (None, true) => Clef::G2,
                (None, false) => return Err(CodecError::NoteBeforeClef { event: events.len() }),
            };
            let (rc, ac) = cfg.rows[row];
            let rhythm = RhythmToken::from_class(rc as usize - 1).expect("row rhythm class in range");
            let glyph = Accidental::from_class(ac as usize).expect("row accidental class in range");
            let pos = StaffPosition::from_index(row / 2).expect("row in range");
            let plain = position_to_pitch(c, 0, Accidental::None, pos)?;
            let PitchToken::Note { step, octave, .. } = plain else { unreachable!() };
            let sounded = ctx.sound(step, octave, glyph);
            let pitch = PitchToken::note(step, octave, sounded)?;
            notes.push(Note {
                pitch,
                rhythm,
                position: Some(pos),
                voice: 0,
            });
        }
        events.push(ScoreEvent::notes(notes));
    }
    Ok(SymbolicScore::new(events))
}

/// Spelling: `off` for the all-off configuration, otherwise comma-separated
/// items in bit/row order: staff symbols (`clef-G2`), rests (`rest-quarter`),
/// and rows `s<position>.<0|1>=<rhythm>[/<accidental suffix>]`, e.g.
/// `s0.0=quarter,s0.1=half/#`.
impl fmt::Display for FlagConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_blank() {
            return f.write_str("off");
        }
        let mut items = Vec::new();
        for i in self.staff_bits() {
            if i < STAFF_SYMBOL_COUNT {
                items.push(StaffSymbol::from_index(i).unwrap().to_string());
            } else {
                items.push(format!("rest-{}", Duration::ALL[i - STAFF_SYMBOL_COUNT].name()));
            }
        }
        for r in self.occupied_rows() {
            let (rc, ac) = self.rows[r];
            let pos = StaffPosition::from_index(r / 2).unwrap();
            let mut item = format!("s{}.{}={}", pos, r % 2, RhythmToken::from_class(rc as usize - 1).unwrap());
            let acc = Accidental::from_class(ac as usize).unwrap();
            if acc != Accidental::None {
                item.push('/');
                item.push_str(acc.suffix());
            }
            items.push(item);
        }
        f.write_str(&items.join(","))
    }
}

impl FromStr for FlagConfiguration {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CodecError::BadFlagSpelling(s.to_string());
        let mut cfg = FlagConfiguration::blank();
        if s == "off" {
            return Ok(cfg);
        }
        for item in s.split(',') {
            if let Some(d) = item.strip_prefix("rest-") {
                let d = Duration::from_name(d).ok_or_else(bad)?;
                cfg.set_bit(rest_bit(d), true);
            } else if let Some(row) = item.strip_prefix('s').filter(|r| r.contains('=')) {
                let (slot, value) = row.split_once('=').ok_or_else(bad)?;
                let (pos, sub) = slot.split_once('.').ok_or_else(bad)?;
                let pos = StaffPosition::new(pos.parse().map_err(|_| bad())?).map_err(|_| bad())?;
                let sub: usize = match sub {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(bad()),
                };
                let (rhythm, acc) = match value.split_once('/') {
                    Some((r, a)) => (r, Accidental::from_suffix(a).filter(|a| *a != Accidental::None).ok_or_else(bad)?),
                    None => (value, Accidental::None),
                };
                let rhythm: RhythmToken = rhythm.parse().map_err(|_| bad())?;
                cfg.set_row(2 * pos.index() + sub, rhythm.class() as u8 + 1, acc.class() as u8);
            } else {
                let sym: StaffSymbol = item.parse().map_err(|_| bad())?;
                cfg.set_bit(sym.index(), true);
            }
        }
        if cfg.is_blank() || cfg.to_string() != s {
            return Err(bad());
        }
        Ok(cfg)
    }
}

impl Serialize for FlagConfiguration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FlagConfiguration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
