use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{pitch_to_position, Clef, NotationError, PitchToken, RhythmToken, StaffPosition, StaffSymbol};

/// One note (or rest) of a note group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub pitch: PitchToken,
    pub rhythm: RhythmToken,
    /// `None` exactly for rests.
    pub position: Option<StaffPosition>,
    pub voice: u8,
}

impl Note {
    pub fn rest(rhythm: RhythmToken, voice: u8) -> Self {
        Self {
            pitch: PitchToken::Rest,
            rhythm,
            position: None,
            voice,
        }
    }

    /// A pitched note, positioned under `clef`.
    pub fn pitched(clef: Clef, pitch: PitchToken, rhythm: RhythmToken, voice: u8) -> Result<Self, NotationError> {
        Ok(Self {
            pitch,
            rhythm,
            position: Some(pitch_to_position(clef, &pitch)?),
            voice,
        })
    }
}

/// Bottom-to-top order inside a note group: rests first (longest first),
/// then notes by staff position. Ties break on rhythm (longest first), then
/// pitch, then voice, so the order never depends on voice alone when the
/// notes differ.
pub fn canonical_note_order(a: &Note, b: &Note) -> Ordering {
    match (a.position, b.position) {
        (None, None) => a.rhythm.cmp(&b.rhythm).then(a.voice.cmp(&b.voice)),
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(pa), Some(pb)) => pa
            .cmp(&pb)
            .then(a.rhythm.cmp(&b.rhythm))
            .then(a.pitch.cmp(&b.pitch))
            .then(a.voice.cmp(&b.voice)),
    }
}

/// Largest number of notes sharing one staff position.
pub const MAX_NOTES_PER_POSITION: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreEvent {
    Staff(StaffSymbol),
    Notes(Vec<Note>),
}

impl ScoreEvent {
    /// Note group in canonical order.
    pub fn notes(mut notes: Vec<Note>) -> Self {
        notes.sort_by(canonical_note_order);
        ScoreEvent::Notes(notes)
    }

    /// Symbols this event contributes to a label sequence.
    pub fn symbol_count(&self) -> usize {
        match self {
            ScoreEvent::Staff(_) => 1,
            ScoreEvent::Notes(n) => n.len(),
        }
    }
}

/// Ground-truth content of one staff image.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolicScore {
    pub events: Vec<ScoreEvent>,
}

impl SymbolicScore {
    pub fn new(events: Vec<ScoreEvent>) -> Self {
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Label symbols, excluding `+` separators.
    pub fn symbol_count(&self) -> usize {
        self.events.iter().map(ScoreEvent::symbol_count).sum()
    }

    pub fn measure_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, ScoreEvent::Staff(StaffSymbol::Barline)))
            .count()
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> {
        self.events.iter().flat_map(|e| match e {
            ScoreEvent::Notes(n) => n.as_slice(),
            ScoreEvent::Staff(_) => &[],
        })
    }

    pub fn has_pitched_notes(&self) -> bool {
        self.notes().any(|n| !n.pitch.is_rest())
    }

    /// Voice indices used in each measure, in measure order.
    pub fn measure_voice_sets(&self) -> Vec<BTreeSet<u8>> {
        let mut out = Vec::new();
        let mut current = BTreeSet::new();
        let mut open = false;
        for e in &self.events {
            match e {
                ScoreEvent::Staff(StaffSymbol::Barline) => {
                    out.push(std::mem::take(&mut current));
                    open = false;
                }
                ScoreEvent::Notes(notes) => {
                    current.extend(notes.iter().map(|n| n.voice));
                    open = true;
                }
                ScoreEvent::Staff(_) => {}
            }
        }
        if open {
            out.push(current);
        }
        out
    }

    pub fn voice_count(&self) -> usize {
        self.notes().map(|n| n.voice).collect::<BTreeSet<_>>().len()
    }

    /// Copy with every voice index reset to 0. Decoded transcriptions carry
    /// no voice information, so round trips compare against this.
    pub fn without_voices(&self) -> SymbolicScore {
        let events = self
            .events
            .iter()
            .map(|e| match e {
                ScoreEvent::Notes(notes) => ScoreEvent::Notes(
                    notes.iter().map(|n| Note { voice: 0, ..*n }).collect(),
                ),
                other => other.clone(),
            })
            .collect();
        SymbolicScore { events }
    }

    /// Checks the structural invariants: a clef before the first note group,
    /// non-empty canonically ordered groups with positions consistent with
    /// the active clef, at most two notes per position, and a closing barline.
    pub fn validate(&self) -> Result<(), NotationError> {
        let mut clef: Option<Clef> = None;
        for (i, e) in self.events.iter().enumerate() {
            let bad = |why: String| NotationError::InvalidScore { event: i, reason: why };
            match e {
                ScoreEvent::Staff(StaffSymbol::Clef(c)) => clef = Some(*c),
                ScoreEvent::Staff(StaffSymbol::KeySignature(k)) => {
                    StaffSymbol::key(*k).map_err(|e| bad(e.to_string()))?;
                }
                ScoreEvent::Staff(_) => {}
                ScoreEvent::Notes(notes) => {
                    let clef = clef.ok_or_else(|| bad("note group before any clef".into()))?;
                    if notes.is_empty() {
                        return Err(bad("empty note group".into()));
                    }
                    for w in notes.windows(2) {
                        if canonical_note_order(&w[0], &w[1]) == Ordering::Greater {
                            return Err(bad("notes not in bottom-to-top order".into()));
                        }
                    }
                    for n in notes {
                        match (n.pitch, n.position) {
                            (PitchToken::Rest, None) => {}
                            (PitchToken::Rest, Some(_)) => return Err(bad("rest with a staff position".into())),
                            (_, None) => return Err(bad("note without a staff position".into())),
                            (p, Some(pos)) => {
                                let want = pitch_to_position(clef, &p).map_err(|e| bad(e.to_string()))?;
                                if want != pos {
                                    return Err(bad(format!("position {pos} disagrees with clef {}", clef.name())));
                                }
                            }
                        }
                    }
                    for w in notes.windows(MAX_NOTES_PER_POSITION + 1) {
                        if w[0].position.is_some() && w.iter().all(|n| n.position == w[0].position) {
                            return Err(bad("more than two notes on one staff position".into()));
                        }
                    }
                }
            }
        }
        if let Some(last) = self.events.last() {
            if *last != ScoreEvent::Staff(StaffSymbol::Barline) {
                return Err(NotationError::InvalidScore {
                    event: self.events.len() - 1,
                    reason: "score does not end with a barline".into(),
                });
            }
        }
        Ok(())
    }
}
