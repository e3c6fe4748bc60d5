//! Symbol error rate and the decoder comparison harness.
//!
//! Every decoder is scored in advance-position spelling, pitch and rhythm
//! separately, so the three decoders share one token space. Corpus rates are
//! micro-averaged: summed edits over summed reference lengths.

mod report;

use std::ops::AddAssign;

pub use report::{comparison_table, Subset};

use crate::codecs::AdvanceLabels;
use crate::diffcore::{Graph, Tensor};
use crate::model::{DecoderKind, Model, ModelError, Transcription};
use crate::notation::Token;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("ground truth is empty; SER is undefined")]
    EmptyReference,
    #[error("sample `{0}` has an empty ground truth")]
    EmptySample(String),
    #[error("model decodes with `{model}` but `{requested}` was requested")]
    DecoderMismatch { model: DecoderKind, requested: DecoderKind },
    #[error("no samples to evaluate")]
    NoSamples,
    #[error("sample `{id}`: {source}")]
    Model {
        id: String,
        #[source]
        source: ModelError,
    },
}

/// Minimal edit decomposition of a prediction against a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    /// Reference length.
    pub reference: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.insertions + self.deletions + self.substitutions
    }

    /// `(I + D + S) / N`; NaN when `N = 0`, which [`ser`] never returns.
    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.reference as f64
    }
}

impl AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.substitutions += o.substitutions;
        self.reference += o.reference;
    }
}

/// Levenshtein alignment of `predicted` against `truth`.
///
/// Among alignments of minimal cost the backtrace prefers a match or
/// substitution, then a deletion, then an insertion, so the split between
/// the three counts is deterministic. Always `I - D = |predicted| - N`.
pub fn ser<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<EditCounts, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let (n, m) = (truth.len(), predicted.len());
    let w = m + 1;
    // d[i * w + j]: distance between truth[..i] and predicted[..j]
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(truth[i - 1] != predicted[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut c = EditCounts {
        reference: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = truth[i - 1] == predicted[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                c.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    Ok(c)
}

/// One scored sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub id: String,
    pub pitch: EditCounts,
    pub rhythm: EditCounts,
}

/// Scores of one decoder on one subset.
#[derive(Clone, Debug, PartialEq)]
pub struct SerReport {
    pub decoder: DecoderKind,
    pub subset: Subset,
    pub samples: Vec<SampleResult>,
    pub pitch: EditCounts,
    pub rhythm: EditCounts,
}

impl SerReport {
    pub fn new(decoder: DecoderKind, subset: Subset, samples: Vec<SampleResult>) -> Self {
        let (mut pitch, mut rhythm) = (EditCounts::default(), EditCounts::default());
        for s in &samples {
            pitch += s.pitch;
            rhythm += s.rhythm;
        }
        Self {
            decoder,
            subset,
            samples,
            pitch,
            rhythm,
        }
    }

    /// Corpus pitch SER in percent.
    pub fn pitch_ser(&self) -> f64 {
        100.0 * self.pitch.rate()
    }

    /// Corpus rhythm SER in percent.
    pub fn rhythm_ser(&self) -> f64 {
        100.0 * self.rhythm.rate()
    }

    /// Unweighted mean of per-sample rates in percent, `(pitch, rhythm)`.
    /// Reported for comparison only; long samples weigh the same as short ones.
    pub fn macro_ser(&self) -> (f64, f64) {
        let k = self.samples.len() as f64;
        let mean = |f: fn(&SampleResult) -> f64| 100.0 * self.samples.iter().map(f).sum::<f64>() / k;
        (mean(|s| s.pitch.rate()), mean(|s| s.rhythm.rate()))
    }

    /// One `key=value` line.
    pub fn record(&self) -> String {
        let counts = |c: &EditCounts| format!("{}/{}/{}/{}", c.insertions, c.deletions, c.substitutions, c.reference);
        format!(
            "decoder={} subset={} samples={} rhythm_ser={:.4} pitch_ser={:.4} rhythm_idsn={} pitch_idsn={}",
            self.decoder,
            self.subset,
            self.samples.len(),
            self.rhythm_ser(),
            self.pitch_ser(),
            counts(&self.rhythm),
            counts(&self.pitch),
        )
    }
}

/// Scores a transcription against advance-position ground truth.
pub fn score_sample(id: &str, predicted: &Transcription, truth: &AdvanceLabels) -> Result<SampleResult, EvalError> {
    let empty = |_| EvalError::EmptySample(id.to_string());
    Ok(SampleResult {
        id: id.to_string(),
        pitch: ser(&predicted.pitch, &truth.pitch).map_err(empty)?,
        rhythm: ser(&predicted.rhythm, &truth.rhythm).map_err(empty)?,
    })
}

/// Preprocessed image plus its advance-position labels.
#[derive(Clone, Debug)]
pub struct EvalSample {
    pub id: String,
    pub image: Tensor,
    pub truth: AdvanceLabels,
}

/// Scores `transcribe` over `samples`.
pub fn evaluate_with(
    decoder: DecoderKind,
    subset: Subset,
    samples: &[EvalSample],
    mut transcribe: impl FnMut(&EvalSample) -> Result<Transcription, ModelError>,
) -> Result<SerReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let t = transcribe(s).map_err(|source| EvalError::Model {
            id: s.id.clone(),
            source,
        })?;
        out.push(score_sample(&s.id, &t, &s.truth)?);
    }
    Ok(SerReport::new(decoder, subset, out))
}

/// Greedy transcription of one preprocessed image.
pub fn transcribe_image(model: &Model, image: &Tensor) -> Result<Transcription, ModelError> {
    let mut g = Graph::new();
    let out = model.forward(&mut g, image)?;
    Model::transcribe(&g, &out)
}

/// Decodes every sample with `model`, which must use the `decoder` head.
pub fn evaluate(
    model: &Model,
    decoder: DecoderKind,
    subset: Subset,
    samples: &[EvalSample],
) -> Result<SerReport, EvalError> {
    if model.kind() != decoder {
        return Err(EvalError::DecoderMismatch {
            model: model.kind(),
            requested: decoder,
        });
    }
    evaluate_with(decoder, subset, samples, |s| transcribe_image(model, &s.image))
}

/// Advance tokens of a transcription joined for display, pitch then rhythm.
pub fn spell(t: &Transcription) -> (String, String) {
    let j = |v: &[Token]| crate::notation::join_tokens(v);
    (j(&t.pitch), j(&t.rhythm))
}
