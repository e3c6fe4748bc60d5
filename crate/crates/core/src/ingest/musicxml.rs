use std::collections::BTreeSet;

use roxmltree::{Document, Node};

use super::{IngestError, RejectReason};
use crate::notation::{
    Accidental, AccidentalContext, Clef, Duration, Note, NotationError, PitchToken, RhythmToken, ScoreEvent,
    StaffSymbol, Step, SymbolicScore, TimeSignature,
};

/// A parsed single-staff document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedScore {
    pub score: SymbolicScore,
    /// Distinct voice tags seen on notes and rests.
    pub voices: usize,
}

/// Ticks per quarter note (a whole note is 256).
const QUARTER_TICKS: u64 = 64;

enum Item {
    Staff(StaffSymbol),
    Note {
        voice: u8,
        rhythm: RhythmToken,
        /// `(step, octave, alter, glyph)`; `None` for rests.
        pitch: Option<(Step, u8, i32, Accidental)>,
    },
}

struct Cursor<'a> {
    doc: &'a Document<'a>,
    measure: usize,
}

impl Cursor<'_> {
    fn reject(&self, reason: RejectReason, detail: impl Into<String>) -> IngestError {
        IngestError::Rejected {
            reason,
            measure: self.measure,
            detail: detail.into(),
        }
    }

    fn malformed(&self, node: Node, message: impl Into<String>) -> IngestError {
        let pos = self.doc.text_pos_at(node.range().start);
        IngestError::Xml {
            line: pos.row,
            col: pos.col,
            message: message.into(),
        }
    }

    fn child_text<'n>(&self, node: Node<'n, 'n>, name: &str) -> Option<&'n str> {
        child(node, name).and_then(|c| c.text()).map(str::trim)
    }

    fn number<T: std::str::FromStr>(&self, node: Node, name: &str) -> Result<Option<T>, IngestError> {
        match child(node, name) {
            None => Ok(None),
            Some(c) => c
                .text()
                .map(str::trim)
                .and_then(|t| t.parse().ok())
                .map(Some)
                .ok_or_else(|| self.malformed(c, format!("<{name}> is not a number"))),
        }
    }
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

/// Parses an uncompressed partwise MusicXML document with one part on one
/// staff. Notes from all voices that start at the same time within a measure
/// form one note group; distinct onsets give separate groups in time order.
/// Every measure ends with a barline.
pub fn parse_musicxml(text: &str) -> Result<ParsedScore, IngestError> {
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        IngestError::Xml {
            line: pos.row,
            col: pos.col,
            message: e.to_string(),
        }
    })?;
    let mut cur = Cursor { doc: &doc, measure: 0 };
    let root = doc.root_element();
    if root.has_tag_name("score-timewise") {
        return Err(cur.reject(RejectReason::Timewise, "timewise documents are not supported"));
    }
    if !root.has_tag_name("score-partwise") {
        return Err(cur.malformed(root, "root element is not <score-partwise>"));
    }
    let parts: Vec<Node> = root.children().filter(|c| c.has_tag_name("part")).collect();
    let part = match parts.as_slice() {
        [] => return Err(cur.malformed(root, "no <part>")),
        [p] => *p,
        _ => return Err(cur.reject(RejectReason::MultiPart, format!("{} parts", parts.len()))),
    };
    let measures: Vec<Node> = part.children().filter(|c| c.has_tag_name("measure")).collect();
    if measures.is_empty() {
        return Err(cur.malformed(part, "part has no <measure>"));
    }

    let mut state = State::default();
    let mut events = Vec::new();
    for (m, measure) in measures.iter().enumerate() {
        cur.measure = m + 1;
        let items = read_measure(&cur, *measure, &mut state)?;
        state.emit(&cur, items, &mut events)?;
        events.push(ScoreEvent::Staff(StaffSymbol::Barline));
        state.accidentals.barline();
    }
    let score = SymbolicScore::new(events);
    score.validate().map_err(|e| cur.reject(RejectReason::Crowded, e.to_string()))?;
    Ok(ParsedScore {
        voices: state.voices.len(),
        score,
    })
}

#[derive(Default)]
struct State {
    divisions: Option<u64>,
    clef: Option<Clef>,
    key: i8,
    time: Option<TimeSignature>,
    accidentals: AccidentalContext,
    voices: BTreeSet<u8>,
}

fn read_measure(cur: &Cursor, measure: Node, state: &mut State) -> Result<Vec<(u64, usize, Item)>, IngestError> {
    // (onset in ticks, document order, item); sorted stably by onset later
    let mut items: Vec<(u64, usize, Item)> = Vec::new();
    let mut cursor: u64 = 0;
    let mut last_onset: u64 = 0;
    let mut seq = 0;
    let mut push = |items: &mut Vec<_>, onset, item| {
        items.push((onset, seq, item));
        seq += 1;
    };
    for el in measure.children().filter(Node::is_element) {
        match el.tag_name().name() {
            "attributes" => {
                for sym in read_attributes(cur, el, state)? {
                    push(&mut items, cursor, Item::Staff(sym));
                }
            }
            "backup" | "forward" => {
                let d = duration_ticks(cur, el, state)?;
                if el.has_tag_name("forward") {
                    cursor += d;
                } else {
                    cursor = cursor
                        .checked_sub(d)
                        .ok_or_else(|| cur.malformed(el, "<backup> past the start of the measure"))?;
                }
            }
            "note" => {
                if child(el, "grace").is_some() || child(el, "cue").is_some() {
                    continue;
                }
                if child(el, "time-modification").is_some() {
                    return Err(cur.reject(RejectReason::Tuplet, "note with <time-modification>"));
                }
                if let Some(s) = cur.number::<u32>(el, "staff")? {
                    if s != 1 {
                        return Err(cur.reject(RejectReason::MultiStaff, format!("note on staff {s}")));
                    }
                }
                let ticks = duration_ticks(cur, el, state)?;
                let onset = if child(el, "chord").is_some() { last_onset } else { cursor };
                if child(el, "chord").is_none() {
                    last_onset = cursor;
                    cursor += ticks;
                }
                let voice = read_voice(cur, el)?;
                state.voices.insert(voice);
                let rhythm = read_rhythm(cur, el, ticks, state)?;
                let pitch = match (child(el, "rest"), child(el, "pitch")) {
                    (Some(_), _) => None,
                    (None, Some(p)) => Some(read_pitch(cur, el, p)?),
                    (None, None) => {
                        // unpitched percussion and the like
                        return Err(cur.reject(RejectReason::UnsupportedClef, "note without <pitch> or <rest>"));
                    }
                };
                push(&mut items, onset, Item::Note { voice, rhythm, pitch });
            }
            _ => {}
        }
    }
    items.sort_by_key(|&(onset, seq, _)| (onset, seq));
    Ok(items)
}

fn duration_ticks(cur: &Cursor, el: Node, state: &State) -> Result<u64, IngestError> {
    let d: u64 = cur
        .number(el, "duration")?
        .ok_or_else(|| cur.malformed(el, "missing <duration>"))?;
    let div = state.divisions.ok_or_else(|| cur.malformed(el, "<duration> before <divisions>"))?;
    let scaled = d * QUARTER_TICKS;
    if scaled % div != 0 {
        return Err(cur.reject(
            RejectReason::UnsupportedDuration,
            format!("duration {d}/{div} of a quarter is not a multiple of a 256th"),
        ));
    }
    Ok(scaled / div)
}

fn read_voice(cur: &Cursor, el: Node) -> Result<u8, IngestError> {
    match cur.child_text(el, "voice") {
        None => Ok(0),
        Some(t) => match t.parse::<u8>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(cur.reject(RejectReason::BadVoice, format!("voice tag `{t}`"))),
        },
    }
}

fn read_rhythm(cur: &Cursor, el: Node, ticks: u64, state: &State) -> Result<RhythmToken, IngestError> {
    let dots = el.children().filter(|c| c.has_tag_name("dot")).count();
    if let Some(t) = cur.child_text(el, "type") {
        let duration = match t {
            "whole" => Duration::Whole,
            "half" => Duration::Half,
            "quarter" => Duration::Quarter,
            "eighth" => Duration::Eighth,
            "16th" => Duration::Sixteenth,
            "32nd" => Duration::ThirtySecond,
            "64th" => Duration::SixtyFourth,
            other => return Err(cur.reject(RejectReason::UnsupportedDuration, format!("note type `{other}`"))),
        };
        let dots = u8::try_from(dots).unwrap_or(u8::MAX);
        return RhythmToken::new(duration, dots)
            .map_err(|e| cur.reject(RejectReason::UnsupportedDuration, e.to_string()));
    }
    // whole-measure rests usually omit <type>
    if child(el, "rest").is_some_and(|r| {
        r.attribute("measure") == Some("yes") || state.time.is_some_and(|t| u64::from(t.measure_ticks()) == ticks)
    }) {
        return Ok(RhythmToken::plain(Duration::Whole));
    }
    RhythmToken::all()
        .find(|r| u64::from(r.ticks()) == ticks)
        .ok_or_else(|| cur.reject(RejectReason::UnsupportedDuration, format!("{ticks} ticks without <type>")))
}

fn read_pitch(cur: &Cursor, el: Node, p: Node) -> Result<(Step, u8, i32, Accidental), IngestError> {
    let step = cur
        .child_text(p, "step")
        .and_then(|s| s.chars().next())
        .and_then(Step::from_letter)
        .ok_or_else(|| cur.malformed(p, "bad <step>"))?;
    let octave: u8 = cur.number(p, "octave")?.ok_or_else(|| cur.malformed(p, "missing <octave>"))?;
    let alter: f64 = cur.number(p, "alter")?.unwrap_or(0.0);
    if alter.fract() != 0.0 || alter.abs() > 2.0 {
        return Err(cur.reject(RejectReason::PitchOutOfRange, format!("alter {alter}")));
    }
    let glyph = match cur.child_text(el, "accidental") {
        None => Accidental::None,
        Some("sharp") => Accidental::Sharp,
        Some("flat") => Accidental::Flat,
        Some("natural") => Accidental::Natural,
        Some("double-sharp" | "sharp-sharp") => Accidental::DoubleSharp,
        Some("flat-flat") => Accidental::DoubleFlat,
        // quarter tones and combined signs carry no label of their own
        Some(_) => Accidental::None,
    };
    Ok((step, octave, alter as i32, glyph))
}

fn read_attributes(cur: &Cursor, el: Node, state: &mut State) -> Result<Vec<StaffSymbol>, IngestError> {
    if let Some(d) = cur.number::<u64>(el, "divisions")? {
        if d == 0 {
            return Err(cur.malformed(el, "<divisions> is zero"));
        }
        state.divisions = Some(d);
    }
    if let Some(s) = cur.number::<u32>(el, "staves")? {
        if s > 1 {
            return Err(cur.reject(RejectReason::MultiStaff, format!("{s} staves")));
        }
    }
    // label order is clef, key, time regardless of document order
    let mut out = Vec::new();
    if let Some(c) = child(el, "clef") {
        let sign = cur.child_text(c, "sign").unwrap_or("");
        let line = cur.child_text(c, "line").unwrap_or("");
        let shift = cur.child_text(c, "clef-octave-change").unwrap_or("0");
        let clef = match (sign, line, shift) {
            ("G", "2", "0") => Clef::G2,
            ("F", "4", "0") => Clef::F4,
            ("C", "3", "0") => Clef::C3,
            ("C", "4", "0") => Clef::C4,
            _ => {
                return Err(cur.reject(
                    RejectReason::UnsupportedClef,
                    format!("clef {sign}{line} octave change {shift}"),
                ))
            }
        };
        if state.clef != Some(clef) {
            state.clef = Some(clef);
            out.push(StaffSymbol::Clef(clef));
        }
    }
    if let Some(k) = child(el, "key") {
        let fifths: i8 = cur.number(k, "fifths")?.ok_or_else(|| cur.malformed(k, "key without <fifths>"))?;
        if fifths != state.key {
            if fifths == 0 {
                return Err(cur.reject(RejectReason::KeyCancel, "key change to no accidentals"));
            }
            let sym = StaffSymbol::key(fifths).map_err(|e| cur.reject(RejectReason::KeyCancel, e.to_string()))?;
            state.key = fifths;
            state.accidentals.set_key(fifths);
            out.push(sym);
        }
    }
    if let Some(t) = child(el, "time") {
        let beats = cur.child_text(t, "beats").and_then(|b| b.parse::<u8>().ok());
        let beat_type = cur.child_text(t, "beat-type").and_then(|b| b.parse::<u8>().ok());
        let time = beats
            .zip(beat_type)
            .and_then(|(b, d)| TimeSignature::new(b, d).ok())
            .ok_or_else(|| cur.reject(RejectReason::UnsupportedTime, "time signature outside the label set"))?;
        if state.time != Some(time) {
            state.time = Some(time);
            out.push(StaffSymbol::TimeSignature(time));
        }
    }
    Ok(out)
}

impl State {
    /// Turns one measure's onset-sorted items into score events.
    fn emit(
        &mut self,
        cur: &Cursor,
        items: Vec<(u64, usize, Item)>,
        events: &mut Vec<ScoreEvent>,
    ) -> Result<(), IngestError> {
        let mut group: Vec<Note> = Vec::new();
        let mut group_onset = None;
        let flush = |group: &mut Vec<Note>, events: &mut Vec<ScoreEvent>| {
            if !group.is_empty() {
                events.push(ScoreEvent::notes(std::mem::take(group)));
            }
        };
        for (onset, _, item) in items {
            if group_onset != Some(onset) {
                flush(&mut group, events);
                group_onset = Some(onset);
            }
            match item {
                Item::Staff(sym) => {
                    flush(&mut group, events);
                    events.push(ScoreEvent::Staff(sym));
                }
                Item::Note { voice, rhythm, pitch: None } => group.push(Note::rest(rhythm, voice)),
                Item::Note {
                    voice,
                    rhythm,
                    pitch: Some((step, octave, alter, glyph)),
                } => {
                    let clef = self
                        .clef
                        .ok_or_else(|| cur.reject(RejectReason::MissingClef, "note before any clef"))?;
                    let pitch = self.sounded(step, octave, alter, glyph)?;
                    let note = Note::pitched(clef, pitch, rhythm, voice).map_err(|e| match e {
                        NotationError::NotPositionable { .. } | NotationError::OctaveOutOfRange(_) => {
                            cur.reject(RejectReason::PitchOutOfRange, e.to_string())
                        }
                        other => other.into(),
                    })?;
                    group.push(note);
                }
            }
        }
        flush(&mut group, events);
        Ok(())
    }

    /// Sounded label of a note; the printed glyph and carried accidentals
    /// decide unless they contradict `<alter>`, which then wins.
    fn sounded(&mut self, step: Step, octave: u8, alter: i32, glyph: Accidental) -> Result<PitchToken, IngestError> {
        let implied = self.accidentals.implied(step, octave);
        let mut acc = self.accidentals.sound(step, octave, glyph);
        if acc.alter() != alter {
            acc = match alter {
                0 if implied.alter() != 0 => Accidental::Natural,
                0 => implied,
                1 => Accidental::Sharp,
                -1 => Accidental::Flat,
                2 => Accidental::DoubleSharp,
                _ => Accidental::DoubleFlat,
            };
            self.accidentals.sound(step, octave, acc);
        }
        Ok(PitchToken::note(step, octave, acc)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codecs::{decode_advance, encode_advance};

    fn wrap(attributes: &str, measures: &[&str]) -> String {
        let mut body = String::new();
        for (i, m) in measures.iter().enumerate() {
            let attrs = if i == 0 { attributes } else { "" };
            body.push_str(&format!("<measure number=\"{}\">{attrs}{m}</measure>", i + 1));
        }
        format!(
            "<?xml version=\"1.0\"?><score-partwise version=\"3.1\"><part-list><score-part id=\"P1\"/></part-list>\
             <part id=\"P1\">{body}</part></score-partwise>"
        )
    }

    const TREBLE_44: &str = "<attributes><divisions>4</divisions><key><fifths>0</fifths></key>\
        <time><beats>4</beats><beat-type>4</beat-type></time><clef><sign>G</sign><line>2</line></clef></attributes>";

    fn note(step: char, octave: u8, ty: &str, dur: u32, voice: u8, extra: &str) -> String {
        format!(
            "<note>{extra}<pitch><step>{step}</step><octave>{octave}</octave></pitch><duration>{dur}</duration>\
             <voice>{voice}</voice><type>{ty}</type></note>"
        )
    }

    fn tokens(score: &SymbolicScore) -> (String, String) {
        let l = encode_advance(score);
        (
            crate::notation::join_tokens(&l.pitch),
            crate::notation::join_tokens(&l.rhythm),
        )
    }

    #[test]
    fn minimal_document() {
        let doc = wrap(TREBLE_44, &[&note('C', 4, "quarter", 4, 1, "")]);
        let parsed = parse_musicxml(&doc).unwrap();
        assert_eq!(parsed.voices, 1);
        let (p, r) = tokens(&parsed.score);
        assert_eq!(p, "clef-G2 + timesig-4/4 + note-C4 + barline");
        assert_eq!(r, "clef-G2 + timesig-4/4 + quarter + barline");
    }

    #[test]
    fn backup_aligns_two_voices() {
        let m = [
            note('E', 5, "half", 8, 1, ""),
            note('G', 5, "half", 8, 1, "<chord/>"),
            note('C', 5, "half", 8, 1, ""),
            "<backup><duration>16</duration></backup>".to_string(),
            note('C', 4, "quarter", 4, 2, ""),
            note('D', 4, "quarter", 4, 2, ""),
            note('E', 4, "quarter", 4, 2, ""),
            note('F', 4, "quarter", 4, 2, ""),
        ]
        .concat();
        let parsed = parse_musicxml(&wrap(TREBLE_44, &[&m])).unwrap();
        assert_eq!(parsed.voices, 2);
        let (p, r) = tokens(&parsed.score);
        assert_eq!(
            p,
            "clef-G2 + timesig-4/4 + note-C4 note-E5 note-G5 + note-D4 + note-E4 note-C5 + note-F4 + barline"
        );
        assert_eq!(
            r,
            "clef-G2 + timesig-4/4 + quarter half half + quarter + quarter half + quarter + barline"
        );
        assert!(super::super::is_polyphonic(&parsed.score));
    }

    #[test]
    fn key_signature_and_carried_accidentals() {
        let attrs = TREBLE_44.replace("<fifths>0</fifths>", "<fifths>1</fifths>");
        let m = [
            // F#5 from the key
            "<note><pitch><step>F</step><alter>1</alter><octave>5</octave></pitch><duration>4</duration><voice>1</voice><type>quarter</type></note>".to_string(),
            "<note><pitch><step>F</step><octave>5</octave></pitch><duration>4</duration><voice>1</voice><type>quarter</type><accidental>natural</accidental></note>".to_string(),
            // the natural carries
            "<note><pitch><step>F</step><octave>5</octave></pitch><duration>4</duration><voice>1</voice><type>quarter</type></note>".to_string(),
            "<note><rest/><duration>4</duration><voice>1</voice><type>quarter</type></note>".to_string(),
        ]
        .concat();
        let parsed = parse_musicxml(&wrap(&attrs, &[&m])).unwrap();
        let (p, _) = tokens(&parsed.score);
        assert_eq!(p, "clef-G2 + keysig-1 + timesig-4/4 + note-F5# + note-F5N + note-F5N + rest + barline");
    }

    #[test]
    fn unsupported_content_is_rejected_with_a_reason() {
        let tuplet = note('C', 4, "eighth", 2, 1, "").replace("<type>", "<time-modification><actual-notes>3</actual-notes><normal-notes>2</normal-notes></time-modification><type>");
        let cases = [
            (wrap(TREBLE_44, &[&tuplet]), RejectReason::Tuplet),
            (
                wrap(&TREBLE_44.replace("<line>2</line>", "<line>1</line>"), &[""]),
                RejectReason::UnsupportedClef,
            ),
            (
                wrap(&TREBLE_44.replace("<beats>4</beats>", "<beats>3+2</beats>"), &[""]),
                RejectReason::UnsupportedTime,
            ),
            (
                wrap(
                    &TREBLE_44.replace("<fifths>0</fifths>", "<fifths>2</fifths>"),
                    &["", "<attributes><key><fifths>0</fifths></key></attributes>"],
                ),
                RejectReason::KeyCancel,
            ),
            (
                wrap(&TREBLE_44.replace("<clef>", "<staves>2</staves><clef>"), &[""]),
                RejectReason::MultiStaff,
            ),
        ];
        for (doc, want) in cases {
            let err = parse_musicxml(&doc).unwrap_err();
            assert_eq!(err.reason(), Some(want), "{err}");
        }
        let two_parts = wrap(TREBLE_44, &[""]).replace("</part>", "</part><part id=\"P2\"><measure/></part>");
        assert_eq!(parse_musicxml(&two_parts).unwrap_err().reason(), Some(RejectReason::MultiPart));
    }

    #[test]
    fn malformed_markup_reports_a_location() {
        let err = parse_musicxml("<score-partwise>\n<part><measure></part>").unwrap_err();
        match err {
            IngestError::Xml { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn ignored_elements_do_not_change_labels() {
        let plain = wrap(TREBLE_44, &[&note('A', 4, "whole", 16, 1, "")]);
        let decorated = wrap(
            TREBLE_44,
            &[&format!(
                "<direction><direction-type><dynamics><f/></dynamics></direction-type></direction>{}\
                 <barline location=\"right\"><bar-style>light-heavy</bar-style></barline>",
                note('A', 4, "whole", 16, 1, "").replace(
                    "</type>",
                    "</type><notations><tied type=\"start\"/><articulations><staccato/></articulations></notations>"
                )
            )],
        );
        assert_eq!(parse_musicxml(&plain).unwrap(), parse_musicxml(&decorated).unwrap());
    }

    #[test]
    fn rests_only_measure_parses() {
        let m = "<note><rest measure=\"yes\"/><duration>16</duration><voice>1</voice></note>";
        let parsed = parse_musicxml(&wrap(TREBLE_44, &[m])).unwrap();
        assert!(!parsed.score.has_pitched_notes());
        let (p, r) = tokens(&parsed.score);
        assert_eq!(p, "clef-G2 + timesig-4/4 + rest + barline");
        assert_eq!(r, "clef-G2 + timesig-4/4 + whole + barline");
    }

    #[test]
    fn fixtures_survive_the_advance_round_trip() {
        let docs = [
            wrap(TREBLE_44, &[&note('C', 4, "quarter", 4, 1, "")]),
            wrap(
                TREBLE_44,
                &[&[
                    note('C', 4, "half", 8, 1, ""),
                    note('C', 4, "half", 8, 1, ""),
                    "<backup><duration>16</duration></backup>".into(),
                    note('C', 4, "whole", 16, 2, ""),
                ]
                .concat()],
            ),
        ];
        for d in docs {
            let s = parse_musicxml(&d).unwrap().score;
            assert_eq!(decode_advance(&encode_advance(&s)).unwrap(), s.without_voices());
        }
    }
}
