//! Random polyphonic scores.
//!
//! A measure is laid out in 256th-note ticks. The leading voice splits the
//! measure into `events_per_measure` representable durations; every other
//! voice either shares that rhythm or draws its own. Each distinct onset
//! becomes one note group holding every voice that starts there.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::notation::{
    position_to_pitch, Accidental, AccidentalContext, Clef, Note, PitchToken, RhythmToken, ScoreEvent,
    StaffPosition, StaffSymbol, SymbolicScore, TimeSignature, MAX_NOTES_PER_POSITION,
};

use super::RenderError;

/// Most notes in one generated note group (the multi-sequence limit).
const MAX_GROUP: usize = 10;
/// Shortest generated duration in ticks (a 64th).
const MIN_TICKS: u32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Voices per measure, 2..=4.
    pub voices: u8,
    pub measures: usize,
    /// Onsets of the leading voice per measure, 1..=16.
    pub events_per_measure: usize,
    /// Notes a single voice may stack at one onset, 1..=3.
    pub max_chord: usize,
    /// Probability that a voice draws its own rhythm instead of sharing the leading voice's.
    pub independence: f64,
    pub rest_prob: f64,
    pub accidental_prob: f64,
    /// Fixed clef, or any of the four.
    pub clef: Option<Clef>,
    /// Largest absolute key signature drawn.
    pub max_key: i8,
    /// Emit a time signature after the clef/key.
    pub time_signature: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            voices: 2,
            measures: 1,
            events_per_measure: 4,
            max_chord: 2,
            independence: 0.5,
            rest_prob: 0.1,
            accidental_prob: 0.1,
            clef: None,
            max_key: 3,
            time_signature: true,
        }
    }
}

impl GeneratorConfig {
    /// Settings whose scores reach a density of at least 41 symbols per measure.
    pub fn dense() -> Self {
        Self {
            voices: 4,
            measures: 1,
            events_per_measure: 8,
            max_chord: 3,
            independence: 0.0,
            rest_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: String| Err(RenderError::InvalidKnobs(m));
        if !(2..=4).contains(&self.voices) {
            return bad(format!("voices {} outside 2..=4", self.voices));
        }
        if self.measures == 0 || self.measures > 64 {
            return bad(format!("measures {} outside 1..=64", self.measures));
        }
        if !(1..=16).contains(&self.events_per_measure) {
            return bad(format!("events_per_measure {} outside 1..=16", self.events_per_measure));
        }
        if !(1..=3).contains(&self.max_chord) {
            return bad(format!("max_chord {} outside 1..=3", self.max_chord));
        }
        for (name, p) in [
            ("independence", self.independence),
            ("rest_prob", self.rest_prob),
            ("accidental_prob", self.accidental_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(0..=7).contains(&self.max_key) {
            return bad(format!("max_key {} outside 0..=7", self.max_key));
        }
        Ok(())
    }
}

/// Meters whose measure length splits into representable durations.
const METERS: [(u8, u8); 5] = [(4, 4), (3, 4), (2, 4), (6, 8), (2, 2)];

fn rhythm_for_ticks(t: u32) -> Option<RhythmToken> {
    RhythmToken::all().find(|r| r.ticks() == t)
}

/// Splits `total` ticks into `count` representable durations (fewer if the
/// 64th floor is reached), in time order.
fn split_measure<R: Rng>(rng: &mut R, total: u32, count: usize) -> Vec<RhythmToken> {
    let mut parts = vec![total];
    while parts.len() < count {
        let candidates: Vec<usize> = (0..parts.len()).filter(|&i| parts[i] >= 2 * MIN_TICKS).collect();
        let Some(&i) = candidates.choose(rng) else { break };
        let t = parts[i];
        let (a, b) = if t.is_power_of_two() {
            (t / 2, t / 2)
        } else if t % 3 == 0 && (t / 3).is_power_of_two() {
            // dotted: long + short
            (2 * t / 3, t / 3)
        } else {
            // double-dotted: 4 + 3 units
            (4 * t / 7, 3 * t / 7)
        };
        let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        if b < MIN_TICKS || a < MIN_TICKS {
            break;
        }
        parts.splice(i..=i, [a, b]);
    }
    parts
        .into_iter()
        .map(|t| rhythm_for_ticks(t).expect("split keeps durations representable"))
        .collect()
}

/// Staff-position window a voice draws from: voice 0 on top.
fn register(voice: u8, voices: u8) -> (i32, i32) {
    let span = 14 / voices as i32;
    let top = 12 - voice as i32 * span;
    (top - span - 2, top)
}

fn random_glyph<R: Rng>(rng: &mut R, p: f64) -> Accidental {
    if !rng.gen_bool(p) {
        return Accidental::None;
    }
    *[
        Accidental::Sharp,
        Accidental::Sharp,
        Accidental::Flat,
        Accidental::Flat,
        Accidental::Natural,
        Accidental::DoubleSharp,
        Accidental::DoubleFlat,
    ]
    .choose(rng)
    .unwrap()
}

/// Draws a valid polyphonic score; every voice appears in every measure.
pub fn generate_random_score<R: Rng>(rng: &mut R, cfg: &GeneratorConfig) -> Result<SymbolicScore, RenderError> {
    cfg.validate()?;
    let clef = cfg.clef.unwrap_or_else(|| *Clef::ALL.choose(rng).unwrap());
    let key = rng.gen_range(-cfg.max_key..=cfg.max_key);
    let (beats, beat_type) = *METERS.choose(rng).unwrap();
    let meter = TimeSignature::new(beats, beat_type).expect("meter table is valid");

    let mut events = vec![ScoreEvent::Staff(StaffSymbol::Clef(clef))];
    if key != 0 {
        events.push(ScoreEvent::Staff(StaffSymbol::key(key).expect("key within range")));
    }
    if cfg.time_signature {
        events.push(ScoreEvent::Staff(StaffSymbol::TimeSignature(meter)));
    }

    let mut ctx = AccidentalContext::new(key);
    for _ in 0..cfg.measures {
        let lead = split_measure(rng, meter.measure_ticks(), cfg.events_per_measure);
        // onset tick -> (voice, rhythm) starting there
        let mut onsets: BTreeMap<u32, Vec<(u8, RhythmToken)>> = BTreeMap::new();
        for v in 0..cfg.voices {
            let rhythm = if v > 0 && rng.gen_bool(cfg.independence) {
                let n = rng.gen_range(1..=cfg.events_per_measure);
                split_measure(rng, meter.measure_ticks(), n)
            } else {
                lead.clone()
            };
            let mut t = 0;
            for r in rhythm {
                onsets.entry(t).or_default().push((v, r));
                t += r.ticks();
            }
        }
        for starts in onsets.into_values() {
            events.push(note_group(rng, cfg, clef, &mut ctx, &starts)?);
        }
        events.push(ScoreEvent::Staff(StaffSymbol::Barline));
        ctx.barline();
    }
    let score = SymbolicScore::new(events);
    debug_assert!(score.validate().is_ok());
    Ok(score)
}

fn note_group<R: Rng>(
    rng: &mut R,
    cfg: &GeneratorConfig,
    clef: Clef,
    ctx: &mut AccidentalContext,
    starts: &[(u8, RhythmToken)],
) -> Result<ScoreEvent, RenderError> {
    // (voice, rhythm, position) before pitches are resolved
    let mut slots: Vec<(u8, RhythmToken, Option<i32>)> = Vec::new();
    let mut rest_durations = Vec::new();
    let mut per_position: BTreeMap<i32, usize> = BTreeMap::new();
    for &(voice, rhythm) in starts {
        let can_rest = rhythm.dots == 0 && !rest_durations.contains(&rhythm.duration);
        if can_rest && slots.len() < MAX_GROUP && rng.gen_bool(cfg.rest_prob) {
            rest_durations.push(rhythm.duration);
            slots.push((voice, rhythm, None));
            continue;
        }
        let (lo, hi) = register(voice, cfg.voices);
        let root = rng.gen_range(lo..=hi);
        let size = rng.gen_range(1..=cfg.max_chord);
        let mut placed = 0;
        for k in 0..size {
            let s = root + 2 * k as i32;
            if StaffPosition::new(s).is_err() || slots.len() >= MAX_GROUP {
                break;
            }
            let used = per_position.entry(s).or_default();
            if *used >= MAX_NOTES_PER_POSITION {
                continue;
            }
            *used += 1;
            placed += 1;
            slots.push((voice, rhythm, Some(s)));
        }
        if placed == 0 && slots.len() < MAX_GROUP {
            // every note of this voice collided; fall back to a free position
            if let Some(s) = (lo..=hi).find(|s| per_position.get(s).copied().unwrap_or(0) < MAX_NOTES_PER_POSITION) {
                *per_position.entry(s).or_default() += 1;
                slots.push((voice, rhythm, Some(s)));
            }
        }
    }
    if slots.is_empty() {
        // only reachable if every slot was refused; keep the onset as a rest
        let (voice, rhythm) = starts[0];
        slots.push((voice, RhythmToken::plain(rhythm.duration), None));
    }
    // one glyph per position so that unisons agree on the sounded pitch
    let mut glyphs: BTreeMap<i32, Accidental> = BTreeMap::new();
    for &(_, _, s) in &slots {
        if let Some(s) = s {
            glyphs.entry(s).or_insert_with(|| random_glyph(rng, cfg.accidental_prob));
        }
    }
    let mut sounded: BTreeMap<i32, PitchToken> = BTreeMap::new();
    for (&s, &glyph) in &glyphs {
        let pos = StaffPosition::new(s)?;
        let plain = position_to_pitch(clef, 0, Accidental::None, pos)?;
        let PitchToken::Note { step, octave, .. } = plain else { unreachable!() };
        let acc = ctx.sound(step, octave, glyph);
        sounded.insert(s, PitchToken::note(step, octave, acc)?);
    }
    let notes = slots
        .into_iter()
        .map(|(voice, rhythm, s)| match s {
            None => Ok(Note::rest(rhythm, voice)),
            Some(s) => Note::pitched(clef, sounded[&s], rhythm, voice),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreEvent::notes(notes))
}

/// Ticks filled by each voice, per measure.
pub fn measure_ticks_per_voice(score: &SymbolicScore) -> Vec<BTreeMap<u8, u32>> {
    let mut out = Vec::new();
    let mut current: BTreeMap<u8, u32> = BTreeMap::new();
    for e in &score.events {
        match e {
            ScoreEvent::Staff(StaffSymbol::Barline) => out.push(std::mem::take(&mut current)),
            ScoreEvent::Notes(notes) => {
                let mut seen = std::collections::BTreeSet::new();
                for n in notes {
                    // a chord within one voice counts once
                    if seen.insert((n.voice, n.rhythm)) {
                        *current.entry(n.voice).or_default() += n.rhythm.ticks();
                    }
                }
            }
            ScoreEvent::Staff(_) => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::encode_flag;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn measure_splits_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for total in [256, 192, 128, 384] {
            for count in 1..=16 {
                let parts = split_measure(&mut rng, total, count);
                assert_eq!(parts.iter().map(|r| r.ticks()).sum::<u32>(), total);
                assert!(parts.len() <= count);
            }
        }
    }

    #[test]
    fn two_voices_one_measure_four_events() {
        let cfg = GeneratorConfig {
            voices: 2,
            measures: 1,
            events_per_measure: 4,
            max_chord: 1,
            independence: 0.0,
            rest_prob: 0.0,
            ..GeneratorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = generate_random_score(&mut rng, &cfg).unwrap();
            assert_eq!(s.events.last(), Some(&ScoreEvent::Staff(StaffSymbol::Barline)));
            let groups: Vec<_> = s.events.iter().filter(|e| matches!(e, ScoreEvent::Notes(_))).collect();
            assert_eq!(groups.len(), 4);
            assert!(groups.iter().all(|g| g.symbol_count() == 2));
        }
    }

    #[test]
    fn generated_scores_are_valid_and_flag_encodable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..300 {
            let cfg = GeneratorConfig {
                voices: 2 + (i % 3) as u8,
                measures: 1 + i % 3,
                events_per_measure: 1 + i % 9,
                max_chord: 1 + i % 3,
                rest_prob: 0.3,
                accidental_prob: 0.4,
                ..GeneratorConfig::default()
            };
            let s = generate_random_score(&mut rng, &cfg).unwrap();
            s.validate().unwrap();
            encode_flag(&s).unwrap();
            assert_eq!(s.measure_count(), cfg.measures);
            for m in s.measure_voice_sets() {
                assert_eq!(m.len(), cfg.voices as usize);
            }
        }
    }

    #[test]
    fn every_voice_fills_its_measure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = GeneratorConfig {
            voices: 3,
            measures: 2,
            max_chord: 1,
            independence: 1.0,
            ..GeneratorConfig::default()
        };
        for _ in 0..100 {
            let s = generate_random_score(&mut rng, &cfg).unwrap();
            let meter = s
                .events
                .iter()
                .find_map(|e| match e {
                    ScoreEvent::Staff(StaffSymbol::TimeSignature(t)) => Some(*t),
                    _ => None,
                })
                .unwrap();
            for m in measure_ticks_per_voice(&s) {
                assert!(m.values().all(|&t| t == meter.measure_ticks()), "{m:?}");
            }
        }
    }

    #[test]
    fn bad_knobs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for cfg in [
            GeneratorConfig { voices: 1, ..Default::default() },
            GeneratorConfig { voices: 5, ..Default::default() },
            GeneratorConfig { measures: 0, ..Default::default() },
            GeneratorConfig { rest_prob: 1.5, ..Default::default() },
            GeneratorConfig { max_chord: 0, ..Default::default() },
        ] {
            assert!(generate_random_score(&mut rng, &cfg).is_err());
        }
    }
}
