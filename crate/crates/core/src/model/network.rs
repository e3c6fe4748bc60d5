use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{encode, EncoderConfig, ModelError};
use crate::codecs::{decode_flag_lenient, encode_advance, encode_flag, encode_multiseq, merge_streams, MULTISEQ_COUNT};
use crate::ctc::{
    greedy_decode, greedy_decode_flag, loss_baseline, loss_flag, loss_rnn, min_frames, FlagSpace, FlagSymbol, SequenceTargets,
};
use crate::diffcore::{grad_check, Checkpoint, GradCheckOptions, GradCheckReport, Graph, ParamStore, Tensor, Var};
use crate::notation::{SymbolicScore, Token, VocabKind, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Baseline,
    Flag,
    Rnn,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [DecoderKind::Baseline, DecoderKind::Flag, DecoderKind::Rnn];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Baseline => "baseline",
            DecoderKind::Flag => "flag",
            DecoderKind::Rnn => "rnn",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DecoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown decoder `{s}` (baseline, flag, rnn)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub decoder: DecoderKind,
    pub encoder: EncoderConfig,
    /// Width of the staff-symbol reduction layer of the flag head.
    pub flag_staff_latent: usize,
    /// Width of the note reduction layer of the flag head.
    pub flag_note_latent: usize,
    /// Hidden size of the vertical recurrence of the RNN head.
    pub rnn_hidden: usize,
}

impl ModelConfig {
    /// Full-size configuration.
    pub fn new(decoder: DecoderKind) -> Self {
        Self {
            decoder,
            encoder: EncoderConfig::default(),
            flag_staff_latent: 256,
            flag_note_latent: 256,
            rnn_hidden: 256,
        }
    }

    /// Narrow configuration that trains in minutes on one CPU core.
    pub fn desk(decoder: DecoderKind) -> Self {
        Self {
            decoder,
            encoder: EncoderConfig {
                filters: vec![8, 16, 32, 32],
                projection: 96,
                lstm_hidden: 64,
                ..EncoderConfig::default()
            },
            flag_staff_latent: 64,
            flag_note_latent: 128,
            rnn_hidden: 64,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if self.flag_staff_latent == 0 || self.flag_note_latent == 0 || self.rnn_hidden == 0 {
            return Err(ModelError::Config("decoder widths must be positive".into()));
        }
        Ok(())
    }

    fn vocab_sizes(&self) -> (usize, usize) {
        let (p, r) = match self.decoder {
            DecoderKind::Rnn => (VocabKind::MultiSeqPitch, VocabKind::MultiSeqRhythm),
            _ => (VocabKind::AdvancePitch, VocabKind::AdvanceRhythm),
        };
        (Vocabulary::new(p).size(), Vocabulary::new(r).size())
    }

    /// Parameter count, from the layer shapes alone.
    pub fn param_count(&self) -> usize {
        let d = self.encoder.output_dim();
        let (vp, vr) = self.vocab_sizes();
        let fc = |i: usize, o: usize| (i + 1) * o;
        self.encoder.param_count()
            + match self.decoder {
                DecoderKind::Baseline => fc(d, vp) + fc(d, vr),
                DecoderKind::Flag => {
                    let s = FlagSpace::FULL;
                    fc(d, self.flag_staff_latent)
                        + fc(d, self.flag_note_latent)
                        + fc(self.flag_staff_latent, s.staff_bits)
                        + fc(self.flag_note_latent, s.rows * s.rhythm_classes)
                        + fc(self.flag_note_latent, s.rows * s.accidental_classes)
                }
                DecoderKind::Rnn => {
                    let h = self.rnn_hidden;
                    d * h + fc(h, h) + fc(d + h, vp) + fc(d + h, vr)
                }
            }
    }
}

/// Decoder output lattices, one row per slice (logits, not normalized).
#[derive(Clone, Debug)]
pub enum Outputs {
    Baseline { pitch: Var, rhythm: Var },
    Flag { staff: Var, rhythm: Var, accidental: Var },
    Rnn { pitch: Vec<Var>, rhythm: Vec<Var> },
}

impl Outputs {
    pub fn kind(&self) -> DecoderKind {
        match self {
            Outputs::Baseline { .. } => DecoderKind::Baseline,
            Outputs::Flag { .. } => DecoderKind::Flag,
            Outputs::Rnn { .. } => DecoderKind::Rnn,
        }
    }
}

/// Training targets in the encoding each decoder is trained on.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Baseline(SequenceTargets),
    Flag(Vec<FlagSymbol>),
    Rnn(Vec<SequenceTargets>),
}

impl Targets {
    pub fn kind(&self) -> DecoderKind {
        match self {
            Targets::Baseline(_) => DecoderKind::Baseline,
            Targets::Flag(_) => DecoderKind::Flag,
            Targets::Rnn(_) => DecoderKind::Rnn,
        }
    }

    /// Fewest slices over which every stream's CTC alignment exists.
    pub fn min_frames(&self) -> usize {
        let seq = |t: &SequenceTargets| min_frames(&t.pitch).max(min_frames(&t.rhythm));
        match self {
            Targets::Baseline(t) => seq(t),
            Targets::Flag(t) => t.len() + t.windows(2).filter(|w| w[0] == w[1]).count(),
            Targets::Rnn(t) => t.iter().map(seq).max().unwrap_or(0),
        }
    }

    /// Encodes `score` for `kind`.
    pub fn from_score(kind: DecoderKind, score: &SymbolicScore) -> Result<Self, ModelError> {
        Ok(match kind {
            DecoderKind::Baseline => {
                let l = encode_advance(score);
                Targets::Baseline(SequenceTargets {
                    pitch: Vocabulary::new(VocabKind::AdvancePitch).encode(&l.pitch)?,
                    rhythm: Vocabulary::new(VocabKind::AdvanceRhythm).encode(&l.rhythm)?,
                })
            }
            DecoderKind::Flag => Targets::Flag(encode_flag(score)?.iter().map(FlagSymbol::from).collect()),
            DecoderKind::Rnn => {
                let l = encode_multiseq(score)?;
                let (vp, vr) = (Vocabulary::new(VocabKind::MultiSeqPitch), Vocabulary::new(VocabKind::MultiSeqRhythm));
                Targets::Rnn(
                    l.pitch
                        .iter()
                        .zip(&l.rhythm)
                        .map(|(p, r)| {
                            Ok(SequenceTargets {
                                pitch: vp.encode(p)?,
                                rhythm: vr.encode(r)?,
                            })
                        })
                        .collect::<Result<_, ModelError>>()?,
                )
            }
        })
    }
}

/// Greedy transcription in advance-position spelling.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcription {
    pub pitch: Vec<Token>,
    pub rhythm: Vec<Token>,
}

/// Encoder plus one decoder head and its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
}

/// Parameter name under which [`Model::grad_check`] probes the input image.
pub const IMAGE_PARAM: &str = "image";

impl Model {
    /// Fan-in uniform weights, scaled for the following rectifier where
    /// there is one; zero biases except the LSTM forget gates.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        config.encoder.init(&mut rng, &mut p);
        let d = config.encoder.output_dim();
        let (vp, vr) = config.vocab_sizes();
        let mut fc = |p: &mut ParamStore, name: &str, i: usize, o: usize| {
            let w = format!("dec.{name}.w");
            if name.ends_with("_latent") {
                p.init_rectifier(&mut rng, &w, &[i, o], i, config.encoder.leaky_slope);
            } else {
                p.init_uniform(&mut rng, &w, &[i, o], i);
            }
            p.init_zeros(&format!("dec.{name}.b"), &[o]);
        };
        match config.decoder {
            DecoderKind::Baseline => {
                fc(&mut p, "pitch", d, vp);
                fc(&mut p, "rhythm", d, vr);
            }
            DecoderKind::Flag => {
                let s = FlagSpace::FULL;
                let (ls, ln) = (config.flag_staff_latent, config.flag_note_latent);
                fc(&mut p, "staff_latent", d, ls);
                fc(&mut p, "note_latent", d, ln);
                fc(&mut p, "staff", ls, s.staff_bits);
                fc(&mut p, "rhythm", ln, s.rows * s.rhythm_classes);
                fc(&mut p, "accidental", ln, s.rows * s.accidental_classes);
                // Biases start at one expected staff bit and one expected
                // note per slice, so the all-off blank is already likely.
                let sb = -((s.staff_bits - 1) as f64).ln();
                p.insert("dec.staff.b", Tensor::new(vec![s.staff_bits], vec![sb; s.staff_bits]).expect("bias shape"));
                let nb = (((s.rhythm_classes - 1) * (s.rows - 1)) as f64).ln();
                let rb = (0..s.rows * s.rhythm_classes)
                    .map(|j| if j % s.rhythm_classes == 0 { nb } else { 0.0 })
                    .collect();
                p.insert("dec.rhythm.b", Tensor::new(vec![s.rows * s.rhythm_classes], rb).expect("bias shape"));
            }
            DecoderKind::Rnn => {
                let h = config.rnn_hidden;
                fc(&mut p, "cell", h, h);
                fc(&mut p, "pitch", d + h, vp);
                fc(&mut p, "rhythm", d + h, vr);
                p.init_uniform(&mut rng, "dec.cell.wx", &[d, h], d);
            }
        }
        Ok(Self { config, params: p })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> DecoderKind {
        self.config.decoder
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Runs encoder and head on a preprocessed `[1, H, W]` image.
    pub fn forward(&self, g: &mut Graph, image: &Tensor) -> Result<Outputs, ModelError> {
        let x = g.input(image.clone());
        Self::forward_with(&self.config, &self.params, g, x)
    }

    /// Forward pass over an arbitrary parameter store and image node, for
    /// gradient checks that perturb either.
    pub fn forward_with(cfg: &ModelConfig, p: &ParamStore, g: &mut Graph, image: Var) -> Result<Outputs, ModelError> {
        let slices = encode(g, p, &cfg.encoder, image)?;
        let fc = |g: &mut Graph, name: &str, x: Var| -> Result<Var, ModelError> {
            let w = g.param(p, &format!("dec.{name}.w"))?;
            let b = g.param(p, &format!("dec.{name}.b"))?;
            Ok(g.affine(x, w, b)?)
        };
        Ok(match cfg.decoder {
            DecoderKind::Baseline => Outputs::Baseline {
                pitch: fc(g, "pitch", slices)?,
                rhythm: fc(g, "rhythm", slices)?,
            },
            DecoderKind::Flag => {
                let slope = cfg.encoder.leaky_slope;
                let s = fc(g, "staff_latent", slices)?;
                let s = g.leaky_relu(s, slope);
                let n = fc(g, "note_latent", slices)?;
                let n = g.leaky_relu(n, slope);
                Outputs::Flag {
                    staff: fc(g, "staff", s)?,
                    rhythm: fc(g, "rhythm", n)?,
                    accidental: fc(g, "accidental", n)?,
                }
            }
            DecoderKind::Rnn => {
                // h_k = tanh(S Wx + h_{k-1} Wh + b), h_0 = 0; step k reads [S, h_k]
                let wx = g.param(p, "dec.cell.wx")?;
                let sx = g.matmul(slices, wx)?;
                let frames = g.value(slices).shape()[0];
                let mut h = g.input(Tensor::zeros(&[frames, cfg.rnn_hidden]));
                let (mut pitch, mut rhythm) = (Vec::new(), Vec::new());
                for _ in 0..MULTISEQ_COUNT {
                    let rec = fc(g, "cell", h)?;
                    let pre = g.add(sx, rec)?;
                    h = g.tanh(pre);
                    let input = g.concat(&[slices, h], 1)?;
                    pitch.push(fc(g, "pitch", input)?);
                    rhythm.push(fc(g, "rhythm", input)?);
                }
                Outputs::Rnn { pitch, rhythm }
            }
        })
    }

    /// The decoder's training loss against matching targets.
    pub fn loss(g: &mut Graph, outputs: &Outputs, targets: &Targets) -> Result<Var, ModelError> {
        Ok(match (outputs, targets) {
            (Outputs::Baseline { pitch, rhythm }, Targets::Baseline(t)) => loss_baseline(g, *pitch, *rhythm, t)?,
            (Outputs::Flag { staff, rhythm, accidental }, Targets::Flag(t)) => {
                loss_flag(g, FlagSpace::FULL, *staff, *rhythm, *accidental, t)?
            }
            (Outputs::Rnn { pitch, rhythm }, Targets::Rnn(t)) => loss_rnn(g, pitch, rhythm, t)?,
            (o, t) => {
                return Err(ModelError::KindMismatch {
                    outputs: o.kind(),
                    targets: t.kind(),
                })
            }
        })
    }

    /// Checks the gradient of the loss on `image` with respect to every
    /// parameter and to the image itself (probed as parameter `image`).
    pub fn grad_check(
        &self,
        image: &Tensor,
        targets: &Targets,
        opts: &GradCheckOptions,
    ) -> Result<GradCheckReport, ModelError> {
        let mut params = self.params.clone();
        params.insert(IMAGE_PARAM, image.clone());
        grad_check(
            |g: &mut Graph, p: &ParamStore| {
                let x = g.param(p, IMAGE_PARAM)?;
                let out = Model::forward_with(&self.config, p, g, x)?;
                Model::loss(g, &out, targets)
            },
            &params,
            opts,
        )
    }

    /// Best-path decoding, converted to advance-position tokens.
    pub fn transcribe(g: &Graph, outputs: &Outputs) -> Result<Transcription, ModelError> {
        let tokens = |kind: VocabKind, lattice: &Tensor| Vocabulary::new(kind).decode(&greedy_decode(lattice));
        Ok(match outputs {
            Outputs::Baseline { pitch, rhythm } => Transcription {
                pitch: tokens(VocabKind::AdvancePitch, g.value(*pitch))?,
                rhythm: tokens(VocabKind::AdvanceRhythm, g.value(*rhythm))?,
            },
            Outputs::Flag { staff, rhythm, accidental } => {
                let configs = greedy_decode_flag(g.value(*staff), g.value(*rhythm), g.value(*accidental));
                let l = encode_advance(&decode_flag_lenient(&configs));
                Transcription {
                    pitch: l.pitch,
                    rhythm: l.rhythm,
                }
            }
            Outputs::Rnn { pitch, rhythm } => {
                let p = pitch
                    .iter()
                    .map(|v| tokens(VocabKind::MultiSeqPitch, g.value(*v)))
                    .collect::<Result<Vec<_>, _>>()?;
                let r = rhythm
                    .iter()
                    .map(|v| tokens(VocabKind::MultiSeqRhythm, g.value(*v)))
                    .collect::<Result<Vec<_>, _>>()?;
                Transcription {
                    pitch: merge_streams(&p),
                    rhythm: merge_streams(&r),
                }
            }
        })
    }

    /// Header holding the model configuration as TOML under `[model]`.
    pub fn header(&self) -> String {
        #[derive(Serialize)]
        struct H<'a> {
            model: &'a ModelConfig,
        }
        toml::to_string(&H { model: &self.config }).expect("model config serializes")
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.header(), self.params.as_map().clone())
    }

    /// Rebuilds a model from a checkpoint, ignoring tensors that do not
    /// belong to the model (optimizer state, for instance).
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct H {
            model: ModelConfig,
        }
        let config = toml::from_str::<H>(&ck.header)
            .map_err(|e| ModelError::Config(format!("checkpoint header: {e}")))?
            .model;
        let mut fresh = Model::new(config, 0)?;
        let mut loaded = BTreeMap::new();
        for (name, t) in fresh.params.as_map() {
            let stored = ck
                .tensors
                .get(name)
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks parameter `{name}`")))?;
            if stored.shape() != t.shape() {
                return Err(ModelError::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            loaded.insert(name.clone(), stored.clone());
        }
        fresh.params = ParamStore::from_map(loaded);
        Ok(fresh)
    }
}
