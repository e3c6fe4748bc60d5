//! Adam optimization over per-sample graphs, with validation, best-model
//! checkpoints and exact resumption.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::codecs::AdvanceLabels;
use crate::diffcore::{Checkpoint, Gradients, Graph, ParamStore, Tensor};
use crate::eval::{evaluate_with, transcribe_image, EvalSample, SerReport, Subset};
use crate::model::{EncoderConfig, Model, Targets};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates applied so far.
    pub t: u64,
    m: ParamStore,
    v: ParamStore,
}

const MOMENT1: &str = "adam.m/";
const MOMENT2: &str = "adam.v/";

impl Adam {
    pub fn new(lr: f64, params: &ParamStore) -> Self {
        let zeros = || {
            let mut s = ParamStore::new();
            for (name, t) in params.iter() {
                s.insert(name.clone(), Tensor::zeros(t.shape()));
            }
            s
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update; parameters without a gradient are left alone.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.get_mut(name).expect("moment for every parameter").data_mut();
            let v = self.v.get_mut(name).expect("moment for every parameter").data_mut();
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }

    fn export(&self, into: &mut std::collections::BTreeMap<String, Tensor>) {
        for (name, t) in self.m.iter() {
            into.insert(format!("{MOMENT1}{name}"), t.clone());
        }
        for (name, t) in self.v.iter() {
            into.insert(format!("{MOMENT2}{name}"), t.clone());
        }
    }

    fn import(&mut self, ck: &Checkpoint) -> Result<(), CliError> {
        for (prefix, store) in [(MOMENT1, &mut self.m), (MOMENT2, &mut self.v)] {
            let names: Vec<String> = store.names().cloned().collect();
            for name in names {
                let t = ck
                    .tensors
                    .get(&format!("{prefix}{name}"))
                    .ok_or_else(|| CliError::Checkpoint(format!("training state lacks `{prefix}{name}`")))?;
                if t.shape() != store.get(&name).unwrap().shape() {
                    return Err(CliError::Checkpoint(format!("`{prefix}{name}` has shape {:?}", t.shape())));
                }
                store.insert(name, t.clone());
            }
        }
        Ok(())
    }
}

/// A preprocessed training image with the targets of one decoder.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub id: String,
    pub image: Tensor,
    pub targets: Targets,
    pub truth: AdvanceLabels,
}

impl TrainSample {
    /// Whether the encoder yields enough slices for the CTC targets.
    pub fn fits(&self, encoder: &EncoderConfig) -> bool {
        encoder.slices(self.image.shape()[2]) >= self.targets.min_frames()
    }

    pub fn eval_sample(&self) -> EvalSample {
        EvalSample {
            id: self.id.clone(),
            image: self.image.clone(),
            truth: self.truth.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Validate (and checkpoint) every this many steps, and after the last.
    pub eval_every: usize,
    pub log_every: usize,
    /// Rescale the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    /// Stop once validation rhythm and pitch SER (%) are both at most these.
    pub stop_at: Option<(f64, f64)>,
}

/// Where training writes. `best` receives the best-by-validation model,
/// `state` the latest full state (model and optimizer) for resuming, `log`
/// the step log, and `dump` the offending batch if the loss goes non-finite.
#[derive(Clone, Debug)]
pub struct TrainPaths {
    pub best: PathBuf,
    pub state: PathBuf,
    pub log: PathBuf,
    pub dump: PathBuf,
}

impl TrainPaths {
    /// `<checkpoint>`, `<checkpoint>.state`, `<checkpoint>.log`, `<checkpoint>.nan.txt`.
    pub fn beside(checkpoint: &Path) -> Self {
        let with = |ext: &str| {
            let mut s = checkpoint.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        Self {
            best: checkpoint.to_path_buf(),
            state: with(".state"),
            log: with(".log"),
            dump: with(".nan.txt"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainHeader {
    step: u64,
    seed: u64,
    batch_size: usize,
    /// Best validation rhythm + pitch SER so far.
    best: Option<f64>,
}

/// Model, optimizer and bookkeeping; everything needed to continue.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    pub step: u64,
    pub best: Option<f64>,
}

impl TrainState {
    pub fn new(model: Model, learning_rate: f64) -> Self {
        let adam = Adam::new(learning_rate, model.params());
        Self {
            model,
            adam,
            step: 0,
            best: None,
        }
    }

    fn checkpoint(&self, opts: &TrainOptions, with_optimizer: bool) -> Checkpoint {
        #[derive(Serialize)]
        struct H<'a> {
            train: &'a TrainHeader,
        }
        let header = TrainHeader {
            step: self.step,
            seed: opts.seed,
            batch_size: opts.batch_size,
            best: self.best,
        };
        let mut ck = self.model.to_checkpoint();
        ck.header.push('\n');
        ck.header.push_str(&toml::to_string(&H { train: &header }).expect("train header serializes"));
        if with_optimizer {
            self.adam.export(&mut ck.tensors);
        }
        ck
    }

    /// Restores a state written by [`train`]. The batch schedule must match:
    /// same seed and batch size.
    pub fn resume(path: &Path, opts: &TrainOptions) -> Result<Self, CliError> {
        #[derive(Deserialize)]
        struct H {
            train: TrainHeader,
        }
        let ck = Checkpoint::load(path)?;
        let h = toml::from_str::<H>(&ck.header)
            .map_err(|e| CliError::Checkpoint(format!("{}: no training state ({e})", path.display())))?
            .train;
        if h.seed != opts.seed || h.batch_size != opts.batch_size {
            return Err(CliError::Checkpoint(format!(
                "{} was trained with seed {} and batch {}, not seed {} and batch {}",
                path.display(),
                h.seed,
                h.batch_size,
                opts.seed,
                opts.batch_size
            )));
        }
        let model = Model::from_checkpoint(&ck)?;
        let mut adam = Adam::new(opts.learning_rate, model.params());
        adam.import(&ck)?;
        adam.t = h.step;
        Ok(Self {
            model,
            adam,
            step: h.step,
            best: h.best,
        })
    }
}

/// Sample indices of batch `step`: consecutive slices of an endless
/// sequence of seeded epoch permutations, so the schedule is a pure function
/// of `(seed, step)`.
pub fn batch_indices(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch);
    let mut cached: Option<(u64, Vec<usize>)> = None;
    for k in 0..batch as u64 {
        let p = step * batch as u64 + k;
        let epoch = p / n as u64;
        if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().unwrap().1[(p % n as u64) as usize]);
    }
    out
}

/// Loss and gradient averaged over a batch.
pub fn batch_gradient(model: &Model, batch: &[&TrainSample]) -> Result<(f64, Vec<f64>, Gradients), CliError> {
    let mut total: Gradients = Gradients::new();
    let mut losses = Vec::with_capacity(batch.len());
    for s in batch {
        let mut g = Graph::new();
        let out = model.forward(&mut g, &s.image)?;
        let loss = Model::loss(&mut g, &out, &s.targets)?;
        losses.push(g.value(loss).data()[0]);
        g.backward(loss)?;
        for (name, grad) in g.param_grads() {
            match total.get_mut(&name) {
                Some(acc) => acc.data_mut().iter_mut().zip(grad.data()).for_each(|(a, b)| *a += b),
                None => {
                    total.insert(name, grad);
                }
            }
        }
    }
    let k = batch.len() as f64;
    for t in total.values_mut() {
        t.data_mut().iter_mut().for_each(|v| *v /= k);
    }
    Ok((losses.iter().sum::<f64>() / k, losses, total))
}

fn clip(grads: &mut Gradients, max_norm: f64) {
    let norm = grads.values().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.values_mut().for_each(|t| t.data_mut().iter_mut().for_each(|v| *v *= s));
    }
}

/// What a run did.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// `(step, mean batch loss)` for every step taken in this run.
    pub losses: Vec<(u64, f64)>,
    /// Validation reports in order.
    pub validations: Vec<(u64, SerReport)>,
    pub final_step: u64,
    /// True when `stop_at` was reached.
    pub converged: bool,
}

fn validate(model: &Model, val: &[TrainSample]) -> Result<SerReport, CliError> {
    let samples: Vec<EvalSample> = val.iter().map(TrainSample::eval_sample).collect();
    Ok(evaluate_with(model.kind(), Subset::Full, &samples, |s| transcribe_image(model, &s.image))?)
}

/// Runs from `state.step` up to `opts.max_steps`.
pub fn train(
    state: &mut TrainState,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    opts: &TrainOptions,
    paths: Option<&TrainPaths>,
) -> Result<TrainOutcome, CliError> {
    if train_set.is_empty() {
        return Err(CliError::Config("training set is empty".into()));
    }
    if opts.batch_size == 0 || opts.eval_every == 0 || opts.log_every == 0 {
        return Err(CliError::Config("batch_size, eval_every and log_every must be positive".into()));
    }
    let mut log = match paths {
        Some(p) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(state.step > 0)
                .write(true)
                .truncate(state.step == 0)
                .open(&p.log)?,
        ),
        None => None,
    };
    let mut emit = |line: String| -> Result<(), CliError> {
        log::info!("{line}");
        if let Some(f) = log.as_mut() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    };
    let loss_name = match state.model.kind() {
        crate::model::DecoderKind::Baseline => "loss_baseline",
        crate::model::DecoderKind::Flag => "loss_flag",
        crate::model::DecoderKind::Rnn => "loss_rnn",
    };
    emit(format!(
        "start step={} decoder={} loss={loss_name} params={} train={} val={} lr={:e} batch={}",
        state.step,
        state.model.kind(),
        state.model.params().num_elements(),
        train_set.len(),
        val_set.len(),
        opts.learning_rate,
        opts.batch_size
    ))?;
    let mut out = TrainOutcome {
        losses: Vec::new(),
        validations: Vec::new(),
        final_step: state.step,
        converged: false,
    };
    state.adam.lr = opts.learning_rate;
    while (state.step as usize) < opts.max_steps {
        let idx = batch_indices(train_set.len(), opts.batch_size, opts.seed, state.step);
        let batch: Vec<&TrainSample> = idx.iter().map(|&i| &train_set[i]).collect();
        let (loss, losses, mut grads) = batch_gradient(&state.model, &batch)?;
        let grad_ok = grads.values().all(|t| t.data().iter().all(|v| v.is_finite()));
        if !loss.is_finite() || !grad_ok {
            let ids: Vec<String> = batch.iter().map(|s| s.id.clone()).collect();
            if let Some(p) = paths {
                let mut dump = format!("step={} batch={}\n", state.step, state.step);
                for (id, l) in ids.iter().zip(&losses) {
                    dump.push_str(&format!("{id} loss={l}\n"));
                }
                std::fs::write(&p.dump, dump)?;
            }
            return Err(CliError::NonFinite { step: state.step, ids });
        }
        if let Some(c) = opts.clip_norm {
            clip(&mut grads, c);
        }
        state.adam.step(state.model.params_mut(), &grads);
        out.losses.push((state.step, loss));
        state.step += 1;
        if state.step % opts.log_every as u64 == 0 {
            emit(format!("step={} loss={loss:.6}", state.step))?;
        }
        let last = state.step as usize == opts.max_steps;
        if state.step % opts.eval_every as u64 == 0 || last {
            if !val_set.is_empty() {
                let r = validate(&state.model, val_set)?;
                let score = r.rhythm_ser() + r.pitch_ser();
                emit(format!(
                    "step={} val_rhythm_ser={:.4} val_pitch_ser={:.4}",
                    state.step,
                    r.rhythm_ser(),
                    r.pitch_ser()
                ))?;
                let improved = state.best.is_none_or(|b| score < b);
                if improved {
                    state.best = Some(score);
                    if let Some(p) = paths {
                        state.checkpoint(opts, false).save(&p.best)?;
                    }
                }
                let done = opts.stop_at.is_some_and(|(rs, ps)| r.rhythm_ser() <= rs && r.pitch_ser() <= ps);
                out.validations.push((state.step, r));
                if done {
                    out.converged = true;
                }
            } else if let Some(p) = paths {
                state.checkpoint(opts, false).save(&p.best)?;
            }
            if let Some(p) = paths {
                state.checkpoint(opts, true).save(&p.state)?;
            }
            if out.converged {
                emit(format!("stop step={} reached target", state.step))?;
                break;
            }
        }
    }
    out.final_step = state.step;
    Ok(out)
}
