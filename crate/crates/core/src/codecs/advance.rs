use serde::{Deserialize, Serialize};

use super::CodecError;
use crate::notation::{Clef, Note, ScoreEvent, StaffSymbol, SymbolicScore, Token};

/// Pitch and rhythm label streams sharing one event structure.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceLabels {
    pub pitch: Vec<Token>,
    pub rhythm: Vec<Token>,
}

pub fn encode_advance(score: &SymbolicScore) -> AdvanceLabels {
    let mut out = AdvanceLabels::default();
    for (i, event) in score.events.iter().enumerate() {
        if i > 0 {
            out.pitch.push(Token::Separator);
            out.rhythm.push(Token::Separator);
        }
        match event {
            ScoreEvent::Staff(s) => {
                out.pitch.push(Token::Staff(*s));
                out.rhythm.push(Token::Staff(*s));
            }
            ScoreEvent::Notes(notes) => {
                for n in notes {
                    out.pitch.push(Token::Pitch(n.pitch));
                    out.rhythm.push(Token::Rhythm(n.rhythm));
                }
            }
        }
    }
    out
}

/// Inverse of [`encode_advance`]; voices come back as 0.
pub fn decode_advance(labels: &AdvanceLabels) -> Result<SymbolicScore, CodecError> {
    let (p, r) = (&labels.pitch, &labels.rhythm);
    if p.len() != r.len() {
        return Err(CodecError::LengthMismatch {
            pitch: p.len(),
            rhythm: r.len(),
        });
    }
    let mut events = Vec::new();
    let mut clef: Option<Clef> = None;
    let mut start = 0;
    for i in 0..=p.len() {
        let end = i == p.len();
        if !end {
            match (p[i] == Token::Separator, r[i] == Token::Separator) {
                (false, false) => continue,
                (true, true) => {}
                _ => return Err(CodecError::SeparatorMismatch { index: i }),
            }
        }
        if end && p.is_empty() {
            break;
        }
        let malformed = |reason: &str| CodecError::MalformedEvent {
            index: start,
            reason: reason.to_string(),
        };
        if start == i {
            return Err(malformed("empty event"));
        }
        let (pg, rg) = (&p[start..i], &r[start..i]);
        if let (Token::Staff(a), Token::Staff(b)) = (pg[0], rg[0]) {
            if pg.len() != 1 || a != b {
                return Err(malformed("staff symbol must stand alone and match in both sequences"));
            }
            if let StaffSymbol::Clef(c) = a {
                clef = Some(c);
            }
            events.push(ScoreEvent::Staff(a));
        } else {
            let mut notes = Vec::with_capacity(pg.len());
            for (pt, rt) in pg.iter().zip(rg) {
                let (Token::Pitch(pitch), Token::Rhythm(rhythm)) = (*pt, *rt) else {
                    return Err(malformed("note events hold only pitch and rhythm tokens"));
                };
                notes.push(if pitch.is_rest() {
                    Note::rest(rhythm, 0)
                } else {
                    let c = clef.ok_or(CodecError::NoteBeforeClef { event: events.len() })?;
                    Note::pitched(c, pitch, rhythm, 0)?
                });
            }
            events.push(ScoreEvent::notes(notes));
        }
        start = i + 1;
    }
    Ok(SymbolicScore::new(events))
}
