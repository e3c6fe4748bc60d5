use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::IngestError;
use crate::codecs::LabelRecord;
use crate::notation::SymbolicScore;

/// Minimum density of the hard subset, inclusive.
pub const HARD_DENSITY: u64 = 41;

/// Anything that carries a ground-truth score.
pub trait Sample {
    fn score(&self) -> &SymbolicScore;
}

impl Sample for SymbolicScore {
    fn score(&self) -> &SymbolicScore {
        self
    }
}

impl Sample for LabelRecord {
    fn score(&self) -> &SymbolicScore {
        &self.score
    }
}

/// True iff some measure holds notes or rests from two or more voices.
pub fn is_polyphonic(score: &SymbolicScore) -> bool {
    score.measure_voice_sets().iter().any(|v| v.len() >= 2)
}

/// Symbols per measure as an exact ratio. Symbols are label tokens other
/// than the `+` separator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Density {
    pub symbols: u64,
    /// Never zero.
    pub measures: u64,
}

impl Density {
    pub fn value(self) -> f64 {
        self.symbols as f64 / self.measures as f64
    }

    pub fn at_least(self, threshold: u64) -> bool {
        self.symbols >= threshold * self.measures
    }
}

impl PartialOrd for Density {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Density {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.symbols as u128 * other.measures as u128).cmp(&(other.symbols as u128 * self.measures as u128))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleStats {
    pub length: u64,
    pub measures: u64,
    pub voices: u64,
}

impl SampleStats {
    /// `None` when the score has no measures.
    pub fn of(score: &SymbolicScore) -> Option<Self> {
        let measures = score.measure_count() as u64;
        (measures > 0).then(|| SampleStats {
            length: score.symbol_count() as u64,
            measures,
            voices: score.voice_count().max(1) as u64,
        })
    }

    pub fn density(&self) -> Density {
        Density {
            symbols: self.length,
            measures: self.measures,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Summary {
        let n = values.clone().count() as f64;
        Summary {
            min: values.clone().fold(f64::INFINITY, f64::min),
            mean: values.clone().sum::<f64>() / n,
            max: values.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// A sample left out of the statistics, by corpus index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exclusion {
    pub index: usize,
    pub reason: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub samples: Vec<SampleStats>,
    pub length: Summary,
    pub measures: Summary,
    pub density: Summary,
    pub voices: Summary,
    pub excluded: Vec<Exclusion>,
}

impl CorpusStats {
    /// `key=value` lines, one statistic per line.
    pub fn report(&self) -> String {
        let mut out = format!("samples={}\nexcluded={}\n", self.samples.len(), self.excluded.len());
        for (name, s) in [
            ("length", self.length),
            ("measures", self.measures),
            ("density", self.density),
            ("voices", self.voices),
        ] {
            out.push_str(&format!("{name}.min={}\n{name}.mean={:.2}\n{name}.max={}\n", s.min, s.mean, s.max));
        }
        out
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.report())
    }
}

/// Length, measure, density and voice statistics. Samples without measures
/// are excluded and listed.
pub fn compute_stats<T: Sample>(corpus: &[T]) -> Result<CorpusStats, IngestError> {
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    for (index, s) in corpus.iter().enumerate() {
        match SampleStats::of(s.score()) {
            Some(st) => samples.push(st),
            None => excluded.push(Exclusion {
                index,
                reason: "no measures",
            }),
        }
    }
    if samples.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let it = samples.iter();
    Ok(CorpusStats {
        length: Summary::of(it.clone().map(|s| s.length as f64)),
        measures: Summary::of(it.clone().map(|s| s.measures as f64)),
        density: Summary::of(it.clone().map(|s| s.density().value())),
        voices: Summary::of(it.map(|s| s.voices as f64)),
        samples,
        excluded,
    })
}

/// Indices of samples whose density is at least [`HARD_DENSITY`].
pub fn hard_filter<T: Sample>(corpus: &[T]) -> Vec<usize> {
    hard_filter_at(corpus, HARD_DENSITY)
}

/// Indices of samples whose density is at least `threshold`.
pub fn hard_filter_at<T: Sample>(corpus: &[T], threshold: u64) -> Vec<usize> {
    corpus
        .iter()
        .enumerate()
        .filter(|(_, s)| SampleStats::of(s.score()).is_some_and(|st| st.density().at_least(threshold)))
        .map(|(i, _)| i)
        .collect()
}

/// Keeps polyphonic samples with at least one pitched note; returns kept
/// indices and the reason each other sample was dropped.
pub fn dataset_filter<T: Sample>(corpus: &[T]) -> (Vec<usize>, Vec<Exclusion>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (index, s) in corpus.iter().enumerate() {
        let score = s.score();
        let reason = if score.measure_count() == 0 {
            Some("no measures")
        } else if !score.has_pitched_notes() {
            Some("sparse")
        } else if !is_polyphonic(score) {
            Some("monophonic")
        } else {
            None
        };
        match reason {
            None => kept.push(index),
            Some(reason) => dropped.push(Exclusion { index, reason }),
        }
    }
    (kept, dropped)
}

/// Disjoint index sets covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Default train/validation/test fractions.
pub const SPLIT_FRACTIONS: [f64; 3] = [0.70, 0.15, 0.15];

/// Seeded 70/15/15 partition of `0..n`. Train and validation sizes are
/// rounded half up from 70% and 15%; test takes the remainder.
pub fn split(n: usize, seed: u64) -> Result<Split, IngestError> {
    split_fractions(n, SPLIT_FRACTIONS, seed)
}

/// Seeded partition with the given fractions, which must be non-negative
/// and sum to 1. Fractions are taken to the nearest basis point so the
/// rounding is exact.
pub fn split_fractions(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split, IngestError> {
    if n < 10 {
        return Err(IngestError::TooSmall(n));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(IngestError::BadFractions(fractions));
    }
    let bp = |f: f64| (f * 10_000.0).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (bp(fractions[0]) * n + 5_000) / 10_000;
    let n_val = ((bp(fractions[1]) * n + 5_000) / 10_000).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Split { train: idx, val, test })
}
