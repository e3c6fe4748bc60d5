use std::collections::BTreeMap;
use std::fmt::Write;

use super::IngestError;
use crate::notation::{
    Accidental, AccidentalContext, Clef, Duration, Note, PitchToken, ScoreEvent, StaffSymbol, SymbolicScore,
};

const DIVISIONS: u32 = 64;

fn clef_xml(c: Clef) -> (&'static str, u8) {
    match c {
        Clef::G2 => ("G", 2),
        Clef::F4 => ("F", 4),
        Clef::C3 => ("C", 3),
        Clef::C4 => ("C", 4),
    }
}

fn type_name(d: Duration) -> &'static str {
    d.name()
}

fn glyph_name(a: Accidental) -> Option<&'static str> {
    match a {
        Accidental::None => None,
        Accidental::Sharp => Some("sharp"),
        Accidental::Flat => Some("flat"),
        Accidental::Natural => Some("natural"),
        Accidental::DoubleSharp => Some("double-sharp"),
        Accidental::DoubleFlat => Some("flat-flat"),
    }
}

/// Writes `score` as a single-part partwise MusicXML document.
///
/// Each voice becomes a MusicXML voice, written one after another with
/// `<backup>` to the start of the run of note groups. A group starts where
/// the latest of its voices ended, and strictly after the previous group,
/// so parsing the output regroups notes exactly as in `score`.
pub fn to_musicxml(score: &SymbolicScore) -> Result<String, IngestError> {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<score-partwise version=\"3.1\">\n\
         <part-list><score-part id=\"P1\"><part-name>Music</part-name></score-part></part-list>\n<part id=\"P1\">\n",
    );
    let glyphs = printed_glyphs(score)?;
    let mut measure: Vec<(usize, &ScoreEvent)> = Vec::new();
    let mut number = 1;
    let mut first = true;
    for (i, e) in score.events.iter().enumerate() {
        if matches!(e, ScoreEvent::Staff(StaffSymbol::Barline)) {
            write_measure(&mut out, number, &measure, &glyphs, first);
            measure.clear();
            number += 1;
            first = false;
        } else {
            measure.push((i, e));
        }
    }
    if !measure.is_empty() {
        write_measure(&mut out, number, &measure, &glyphs, first);
    }
    out.push_str("</part>\n</score-partwise>\n");
    Ok(out)
}

/// Glyph printed before each note, keyed by (event, note index).
fn printed_glyphs(score: &SymbolicScore) -> Result<BTreeMap<(usize, usize), Accidental>, IngestError> {
    let mut ctx = AccidentalContext::new(0);
    let mut out = BTreeMap::new();
    for (i, e) in score.events.iter().enumerate() {
        match e {
            ScoreEvent::Staff(StaffSymbol::KeySignature(k)) => ctx.set_key(*k),
            ScoreEvent::Staff(StaffSymbol::Barline) => ctx.barline(),
            ScoreEvent::Staff(_) => {}
            ScoreEvent::Notes(notes) => {
                for (j, n) in notes.iter().enumerate() {
                    out.insert((i, j), ctx.glyph_for(&n.pitch)?);
                }
            }
        }
    }
    Ok(out)
}

fn write_measure(
    out: &mut String,
    number: usize,
    events: &[(usize, &ScoreEvent)],
    glyphs: &BTreeMap<(usize, usize), Accidental>,
    first: bool,
) {
    let _ = writeln!(out, "<measure number=\"{number}\">");
    if first {
        let _ = writeln!(out, "<attributes><divisions>{DIVISIONS}</divisions></attributes>");
    }
    let mut segment: Vec<(usize, &[Note])> = Vec::new();
    let mut staff: Vec<StaffSymbol> = Vec::new();
    let mut at = 0u32;
    for &(i, e) in events {
        match e {
            ScoreEvent::Staff(s) => {
                if !segment.is_empty() {
                    at = write_segment(out, at, &segment, glyphs);
                    segment.clear();
                }
                staff.push(*s);
            }
            ScoreEvent::Notes(n) => {
                if !staff.is_empty() {
                    write_attributes(out, &staff);
                    staff.clear();
                }
                segment.push((i, n));
            }
        }
    }
    if !segment.is_empty() {
        write_segment(out, at, &segment, glyphs);
    }
    if !staff.is_empty() {
        write_attributes(out, &staff);
    }
    out.push_str("</measure>\n");
}

fn write_attributes(out: &mut String, symbols: &[StaffSymbol]) {
    // schema order: key, time, clef
    out.push_str("<attributes>");
    for s in symbols {
        if let StaffSymbol::KeySignature(k) = s {
            let _ = write!(out, "<key><fifths>{k}</fifths></key>");
        }
    }
    for s in symbols {
        if let StaffSymbol::TimeSignature(t) = s {
            let _ = write!(out, "<time><beats>{}</beats><beat-type>{}</beat-type></time>", t.beats(), t.beat_type());
        }
    }
    for s in symbols {
        if let StaffSymbol::Clef(c) = s {
            let (sign, line) = clef_xml(*c);
            let _ = write!(out, "<clef><sign>{sign}</sign><line>{line}</line></clef>");
        }
    }
    out.push_str("</attributes>\n");
}

/// Writes consecutive note groups starting at tick `start`; returns the tick
/// where the last voice ends.
fn write_segment(
    out: &mut String,
    start: u32,
    groups: &[(usize, &[Note])],
    glyphs: &BTreeMap<(usize, usize), Accidental>,
) -> u32 {
    let mut cursor: BTreeMap<u8, u32> = BTreeMap::new();
    // voice -> (onset, event, note indices)
    let mut per_voice: BTreeMap<u8, Vec<(u32, usize, Vec<usize>)>> = BTreeMap::new();
    let mut previous: Option<u32> = None;
    for &(event, notes) in groups {
        let mut onset = notes
            .iter()
            .map(|n| cursor.get(&n.voice).copied().unwrap_or(start))
            .max()
            .unwrap_or(start);
        if let Some(p) = previous {
            onset = onset.max(p + 1);
        }
        previous = Some(onset);
        let mut by_voice: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (j, n) in notes.iter().enumerate() {
            by_voice.entry(n.voice).or_default().push(j);
        }
        for (v, idx) in by_voice {
            let len = idx.iter().map(|&j| notes[j].rhythm.ticks()).max().unwrap_or(0);
            cursor.insert(v, onset + len);
            per_voice.entry(v).or_default().push((onset, event, idx));
        }
    }
    let end = cursor.values().copied().max().unwrap_or(start);
    let lookup: BTreeMap<usize, &[Note]> = groups.iter().copied().collect();
    let mut first_voice = true;
    for (voice, chords) in per_voice {
        if !first_voice {
            let _ = writeln!(out, "<backup><duration>{}</duration></backup>", end - start);
        }
        first_voice = false;
        let mut t = start;
        for (onset, event, idx) in chords {
            if onset > t {
                let _ = writeln!(out, "<forward><duration>{}</duration></forward>", onset - t);
            }
            let notes = lookup[&event];
            let len = idx.iter().map(|&j| notes[j].rhythm.ticks()).max().unwrap_or(0);
            for (k, &j) in idx.iter().enumerate() {
                write_note(out, &notes[j], k > 0, voice, glyphs[&(event, j)], len);
            }
            t = onset + len;
        }
        if t < end {
            let _ = writeln!(out, "<forward><duration>{}</duration></forward>", end - t);
        }
    }
    end
}

fn write_note(out: &mut String, n: &Note, chord: bool, voice: u8, glyph: Accidental, duration: u32) {
    out.push_str("<note>");
    if chord {
        out.push_str("<chord/>");
    }
    match n.pitch {
        PitchToken::Rest => out.push_str("<rest/>"),
        PitchToken::Note {
            step,
            octave,
            accidental,
        } => {
            let _ = write!(out, "<pitch><step>{}</step>", step.letter());
            if accidental.alter() != 0 {
                let _ = write!(out, "<alter>{}</alter>", accidental.alter());
            }
            let _ = write!(out, "<octave>{octave}</octave></pitch>");
        }
    }
    let _ = write!(
        out,
        "<duration>{duration}</duration><voice>{}</voice><type>{}</type>",
        voice + 1,
        type_name(n.rhythm.duration)
    );
    for _ in 0..n.rhythm.dots {
        out.push_str("<dot/>");
    }
    if let Some(g) = glyph_name(glyph) {
        let _ = write!(out, "<accidental>{g}</accidental>");
    }
    out.push_str("</note>\n");
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::parse_musicxml;
    use super::*;
    use crate::render::{generate_random_score, GeneratorConfig};

    #[test]
    fn generated_scores_survive_a_musicxml_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..300 {
            let cfg = if i % 3 == 0 { GeneratorConfig::dense() } else { GeneratorConfig::default() };
            let score = generate_random_score(&mut rng, &cfg).unwrap();
            let xml = to_musicxml(&score).unwrap();
            let parsed = parse_musicxml(&xml).unwrap_or_else(|e| panic!("{e}\n{xml}"));
            assert_eq!(parsed.score, score, "{xml}");
            assert_eq!(parsed.voices, score.voice_count());
        }
    }
}
