//! Label files: JSON Lines, one object per sample.
//!
//! ```json
//! {"id":"s00042","image":"images/s00042.pgm","voices":2,"measures":1,
//!  "advance_pitch":"clef-G2 + note-E4 note-G4 + barline",
//!  "advance_rhythm":"clef-G2 + quarter quarter + barline",
//!  "flag":"clef-G2 s0.0=quarter,s2.0=quarter barline",
//!  "multiseq_pitch":["clef-G2 note-E4 barline","noNote note-G4 noNote", "..."],
//!  "multiseq_rhythm":["..."],
//!  "score":{"events":[...]}}
//! ```
//!
//! `flag` and the multiseq fields are omitted when the score has no
//! representation in that encoding. `score` is the voice-annotated ground
//! truth; the encodings are derived from it and checked on read.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{encode_advance, encode_flag, encode_multiseq, CodecError, FlagConfiguration};
use crate::notation::{join_tokens, SymbolicScore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub image: String,
    pub voices: usize,
    pub measures: usize,
    pub advance_pitch: String,
    pub advance_rhythm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiseq_pitch: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiseq_rhythm: Option<Vec<String>>,
    pub score: SymbolicScore,
}

impl LabelRecord {
    pub fn from_score(id: impl Into<String>, image: impl Into<String>, score: &SymbolicScore) -> Self {
        let adv = encode_advance(score);
        let flag = encode_flag(score)
            .ok()
            .map(|cfgs| cfgs.iter().map(FlagConfiguration::to_string).collect::<Vec<_>>().join(" "));
        let multi = encode_multiseq(score).ok();
        Self {
            id: id.into(),
            image: image.into(),
            voices: score.voice_count(),
            measures: score.measure_count(),
            advance_pitch: join_tokens(&adv.pitch),
            advance_rhythm: join_tokens(&adv.rhythm),
            flag,
            multiseq_pitch: multi.as_ref().map(|m| m.pitch.iter().map(|s| join_tokens(s)).collect()),
            multiseq_rhythm: multi.as_ref().map(|m| m.rhythm.iter().map(|s| join_tokens(s)).collect()),
            score: score.clone(),
        }
    }

    /// Flag configurations parsed from the `flag` field.
    pub fn flag_configs(&self) -> Result<Option<Vec<FlagConfiguration>>, CodecError> {
        self.flag
            .as_ref()
            .map(|f| f.split_whitespace().map(str::parse).collect())
            .transpose()
    }

    /// The derived fields agree with `score`.
    pub fn check(&self) -> Result<(), CodecError> {
        self.score.validate()?;
        let fresh = LabelRecord::from_score(self.id.clone(), self.image.clone(), &self.score);
        if fresh != *self {
            return Err(CodecError::Record(format!("{}: encodings disagree with the score", self.id)));
        }
        Ok(())
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[LabelRecord]) -> Result<(), CodecError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CodecError::Record(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads and checks every record; blank lines are skipped.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<LabelRecord>, CodecError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord =
            serde_json::from_str(&line).map_err(|e| CodecError::Record(format!("line {}: {e}", i + 1)))?;
        rec.check()?;
        out.push(rec);
    }
    Ok(out)
}
