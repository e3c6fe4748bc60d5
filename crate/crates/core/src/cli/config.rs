//! Run configuration. Precedence: built-in defaults, then the TOML file,
//! then command-line flags.
//!
//! ```toml
//! decoder = "flag"
//! learning_rate = 1e-4
//! batch_size = 16
//! max_steps = 5000
//! seed = 0
//! data = "data"
//! checkpoint = "model.ckpt"
//! splits = [0.70, 0.15, 0.15]
//! hard_threshold = 41
//!
//! [generator]
//! voices = 3
//!
//! [noise]
//! crop_jitter = 8
//! edge_clutter = true
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::TrainOptions;
use super::CliError;
use crate::ingest::{HARD_DENSITY, SPLIT_FRACTIONS};
use crate::model::{DecoderKind, EncoderConfig, ModelConfig};
use crate::notation::SymbolicScore;
use crate::render::{generate_random_score, GeneratorConfig, NoiseOptions};

/// Model width preset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    /// Narrow layers, trainable on one CPU core.
    #[default]
    Desk,
    /// The published widths.
    Full,
}

impl fmt::Display for ModelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSize::Desk => "desk",
            ModelSize::Full => "full",
        })
    }
}

impl FromStr for ModelSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(ModelSize::Desk),
            "full" => Ok(ModelSize::Full),
            _ => Err(format!("unknown model size `{s}` (desk, full)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Decoder head. Training defaults to baseline; evaluation and
    /// transcription take it from the checkpoint and only check it if set.
    pub decoder: Option<DecoderKind>,
    pub model: ModelSize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Dataset directory.
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    /// Directory for evaluation reports.
    pub reports: PathBuf,
    /// Synthetic samples to generate.
    pub samples: usize,
    /// Build the dataset from this directory of MusicXML files instead.
    pub musicxml: Option<PathBuf>,
    pub splits: [f64; 3],
    pub hard_threshold: u64,
    pub eval_every: usize,
    pub log_every: usize,
    /// Validation samples used during training (0 for all).
    pub val_samples: usize,
    /// Train on the first `n` training samples and validate on the same set.
    pub overfit: Option<usize>,
    pub clip_norm: Option<f64>,
    /// Stop when validation rhythm and pitch SER (%) fall to these.
    pub stop_rhythm_ser: Option<f64>,
    pub stop_pitch_ser: Option<f64>,
    /// Continue from `<checkpoint>.state`.
    pub resume: bool,
    /// Replaces the preset encoder when given.
    pub encoder: Option<EncoderConfig>,
    pub generator: GeneratorConfig,
    pub noise: NoiseOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            decoder: None,
            model: ModelSize::Desk,
            learning_rate: 1e-4,
            batch_size: 16,
            max_steps: 5000,
            seed: 0,
            data: PathBuf::from("data"),
            checkpoint: PathBuf::from("model.ckpt"),
            reports: PathBuf::from("reports"),
            samples: 1000,
            musicxml: None,
            splits: SPLIT_FRACTIONS,
            hard_threshold: HARD_DENSITY,
            eval_every: 500,
            log_every: 50,
            val_samples: 64,
            overfit: None,
            clip_norm: None,
            stop_rhythm_ser: None,
            stop_pitch_ser: None,
            resume: false,
            encoder: None,
            generator: GeneratorConfig::default(),
            noise: NoiseOptions::standard(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Defaults overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.log_every == 0 {
            return bad("batch_size, eval_every and log_every must be positive".into());
        }
        if self.splits.iter().any(|f| !(0.0..=1.0).contains(f)) || (self.splits.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("splits {:?} must be non-negative and sum to 1", self.splits));
        }
        if self.overfit == Some(0) {
            return bad("overfit needs at least one sample".into());
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive".into());
        }
        self.generator
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.noise.crop_jitter > 8 {
            return bad(format!("crop_jitter {} exceeds 8", self.noise.crop_jitter));
        }
        self.model_config(self.decoder.unwrap_or(DecoderKind::Baseline))?;
        Ok(())
    }

    /// Architecture for `kind` under this configuration.
    pub fn model_config(&self, kind: DecoderKind) -> Result<ModelConfig, CliError> {
        let mut cfg = match self.model {
            ModelSize::Desk => ModelConfig::desk(kind),
            ModelSize::Full => ModelConfig::new(kind),
        };
        if let Some(enc) = &self.encoder {
            cfg.encoder = enc.clone();
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_steps: self.max_steps,
            seed: self.seed,
            eval_every: self.eval_every,
            log_every: self.log_every,
            clip_norm: self.clip_norm,
            stop_at: match (self.stop_rhythm_ser, self.stop_pitch_ser) {
                (None, None) => None,
                (r, p) => Some((r.unwrap_or(f64::INFINITY), p.unwrap_or(f64::INFINITY))),
            },
        }
    }
}

/// The fixed memorization set: 32 generated staves alternating two and
/// three voices.
pub fn overfit_scores() -> Result<Vec<SymbolicScore>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..32)
        .map(|i| {
            let cfg = GeneratorConfig {
                voices: 2 + (i % 2) as u8,
                ..GeneratorConfig::default()
            };
            Ok(generate_random_score(&mut rng, &cfg)?)
        })
        .collect()
}

/// Architecture for memorizing a small set within minutes on one core.
pub fn overfit_model(kind: DecoderKind) -> ModelConfig {
    ModelConfig {
        decoder: kind,
        encoder: EncoderConfig {
            input_height: 64,
            filters: vec![4, 8, 16, 32],
            projection: 64,
            lstm_hidden: 48,
            ..EncoderConfig::default()
        },
        flag_staff_latent: 32,
        flag_note_latent: 64,
        rnn_hidden: 48,
    }
}

/// Optimizer settings for memorizing a small set.
pub fn overfit_options() -> TrainOptions {
    TrainOptions {
        learning_rate: 2e-3,
        batch_size: 4,
        max_steps: 5000,
        seed: 0,
        eval_every: 100,
        log_every: 100,
        clip_norm: Some(5.0),
        stop_at: Some((5.0, 10.0)),
    }
}
