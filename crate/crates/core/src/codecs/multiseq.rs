use serde::{Deserialize, Serialize};

use super::CodecError;
use crate::notation::{Clef, Note, ScoreEvent, StaffSymbol, SymbolicScore, Token};

/// Number of parallel sequence pairs.
pub const MULTISEQ_COUNT: usize = 10;

/// Ten parallel pitch and rhythm sequences, one token per event each.
/// Sequence `k` holds the `k`-th note from the bottom; staff symbols sit in
/// sequence 0; empty slots hold `noNote`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiSeqLabels {
    pub pitch: Vec<Vec<Token>>,
    pub rhythm: Vec<Vec<Token>>,
}

pub fn encode_multiseq(score: &SymbolicScore) -> Result<MultiSeqLabels, CodecError> {
    let n = score.len();
    let mut pitch = vec![vec![Token::NoNote; n]; MULTISEQ_COUNT];
    let mut rhythm = vec![vec![Token::NoNote; n]; MULTISEQ_COUNT];
    for (i, event) in score.events.iter().enumerate() {
        match event {
            ScoreEvent::Staff(s) => {
                pitch[0][i] = Token::Staff(*s);
                rhythm[0][i] = Token::Staff(*s);
            }
            ScoreEvent::Notes(notes) => {
                if notes.len() > MULTISEQ_COUNT {
                    return Err(CodecError::TooManySymbols {
                        event: i,
                        count: notes.len(),
                    });
                }
                for (k, note) in notes.iter().enumerate() {
                    pitch[k][i] = Token::Pitch(note.pitch);
                    rhythm[k][i] = Token::Rhythm(note.rhythm);
                }
            }
        }
    }
    Ok(MultiSeqLabels { pitch, rhythm })
}

/// Inverse of [`encode_multiseq`]; voices come back as 0.
pub fn decode_multiseq(labels: &MultiSeqLabels) -> Result<SymbolicScore, CodecError> {
    for seqs in [&labels.pitch, &labels.rhythm] {
        if seqs.len() != MULTISEQ_COUNT {
            return Err(CodecError::SequenceCount(seqs.len()));
        }
    }
    let n = labels.pitch[0].len();
    for k in 0..MULTISEQ_COUNT {
        let (p, r) = (labels.pitch[k].len(), labels.rhythm[k].len());
        if p != n || r != n {
            return Err(CodecError::LengthMismatch { pitch: p, rhythm: r });
        }
    }
    let mut clef: Option<Clef> = None;
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let malformed = |reason: &str| CodecError::MalformedEvent {
            index: i,
            reason: reason.to_string(),
        };
        let slots: Vec<(Token, Token)> = (0..MULTISEQ_COUNT)
            .map(|k| (labels.pitch[k][i], labels.rhythm[k][i]))
            .filter(|(p, r)| *p != Token::NoNote || *r != Token::NoNote)
            .collect();
        match slots.as_slice() {
            [] => return Err(malformed("no sequence carries a symbol")),
            [(Token::Staff(a), Token::Staff(b))] if a == b && labels.pitch[0][i] == Token::Staff(*a) => {
                if let StaffSymbol::Clef(c) = a {
                    clef = Some(*c);
                }
                events.push(ScoreEvent::Staff(*a));
            }
            _ => {
                let mut notes = Vec::with_capacity(slots.len());
                for (p, r) in slots {
                    let (Token::Pitch(pitch), Token::Rhythm(rhythm)) = (p, r) else {
                        return Err(malformed("note slots hold only pitch and rhythm tokens"));
                    };
                    notes.push(if pitch.is_rest() {
                        Note::rest(rhythm, 0)
                    } else {
                        let c = clef.ok_or(CodecError::NoteBeforeClef { event: i })?;
                        Note::pitched(c, pitch, rhythm, 0)?
                    });
                }
                events.push(ScoreEvent::notes(notes));
            }
        }
    }
    Ok(SymbolicScore::new(events))
}

/// Merges independently decoded streams into one advance-position stream:
/// the `i`-th emission of every stream forms event `i`, `noNote` is dropped,
/// and events are joined with `+`.
pub fn merge_streams(streams: &[Vec<Token>]) -> Vec<Token> {
    let len = streams.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for i in 0..len {
        let group: Vec<Token> = streams
            .iter()
            .filter_map(|s| s.get(i).copied())
            .filter(|t| *t != Token::NoNote)
            .collect();
        if group.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(Token::Separator);
        }
        out.extend(group);
    }
    out
}
