use std::collections::HashMap;

use super::dp::{ctc_nll_with_grad, min_frames};
use super::flag::{flag_lattice, FlagSpace, FlagSymbol};
use super::CtcError;
use crate::diffcore::{CustomOp, Graph, Tensor, Var};
use crate::notation::BLANK;

/// CTC negative log-likelihood of `target` under a `[frames, classes]`
/// lattice of log-probabilities (blank at class 0), as a scalar node.
pub fn ctc_loss(g: &mut Graph, logp: Var, target: &[usize]) -> Result<Var, CtcError> {
    let (frames, classes) = g.value(logp).dims2("ctc_loss")?;
    let needed = min_frames(target);
    if frames < needed.max(1) {
        return Err(CtcError::Infeasible { frames, needed });
    }
    let (nll, grad) = ctc_nll_with_grad(g.value(logp).data(), frames, classes, target, BLANK)?;
    if nll == f64::INFINITY {
        // every alignment passes through a zero-probability entry
        return Err(CtcError::Infeasible { frames, needed });
    }
    let grad = Tensor::new(vec![frames, classes], grad)?;
    Ok(g.custom(vec![logp], Tensor::scalar(nll), Box::new(CtcOp { grad })))
}

struct CtcOp {
    grad: Tensor,
}

impl CustomOp for CtcOp {
    fn name(&self) -> &'static str {
        "ctc_loss"
    }

    fn backward(&self, _output: &Tensor, upstream: &Tensor, _inputs: &[&Tensor]) -> Vec<Tensor> {
        let mut g = self.grad.clone();
        g.scale_assign(upstream.data()[0]);
        vec![g]
    }
}

/// Vocabulary-index targets of one pitch/rhythm stream pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequenceTargets {
    pub pitch: Vec<usize>,
    pub rhythm: Vec<usize>,
}

/// Pitch CTC plus rhythm CTC with independent alignments; inputs are logits.
pub fn loss_baseline(g: &mut Graph, pitch_logits: Var, rhythm_logits: Var, targets: &SequenceTargets) -> Result<Var, CtcError> {
    let lp = g.log_softmax(pitch_logits)?;
    let lr = g.log_softmax(rhythm_logits)?;
    let a = ctc_loss(g, lp, &targets.pitch)?;
    let b = ctc_loss(g, lr, &targets.rhythm)?;
    Ok(g.add(a, b)?)
}

/// Mean over the stream pairs of (pitch CTC + rhythm CTC).
pub fn loss_rnn(
    g: &mut Graph,
    pitch_logits: &[Var],
    rhythm_logits: &[Var],
    targets: &[SequenceTargets],
) -> Result<Var, CtcError> {
    let m = targets.len();
    if m == 0 || pitch_logits.len() != m || rhythm_logits.len() != m {
        return Err(CtcError::StreamCount {
            outputs: pitch_logits.len().min(rhythm_logits.len()),
            targets: m,
        });
    }
    let mut total: Option<Var> = None;
    for k in 0..m {
        let l = loss_baseline(g, pitch_logits[k], rhythm_logits[k], &targets[k])?;
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    Ok(g.scale(total.expect("at least one stream"), 1.0 / m as f64))
}

/// Single CTC over flag configurations with the all-off configuration as
/// blank. `rhythm_logits` is `[frames, rows * rhythm_classes]` and
/// `accidental_logits` is `[frames, rows * accidental_classes]`.
pub fn loss_flag(
    g: &mut Graph,
    space: FlagSpace,
    staff_logits: Var,
    rhythm_logits: Var,
    accidental_logits: Var,
    target: &[FlagSymbol],
) -> Result<Var, CtcError> {
    let frames = g.value(staff_logits).dims2("loss_flag")?.0;
    let r = g.reshape(rhythm_logits, vec![frames * space.rows, space.rhythm_classes])?;
    let a = g.reshape(accidental_logits, vec![frames * space.rows, space.accidental_classes])?;
    let rl = g.log_softmax(r)?;
    let al = g.log_softmax(a)?;
    let mut columns: Vec<FlagSymbol> = Vec::new();
    let mut index: HashMap<&FlagSymbol, usize> = HashMap::new();
    let mut ids = Vec::with_capacity(target.len());
    for s in target {
        let id = *index.entry(s).or_insert_with(|| {
            columns.push(s.clone());
            columns.len()
        });
        ids.push(id);
    }
    let lattice = flag_lattice(g, space, staff_logits, rl, al, &columns)?;
    ctc_loss(g, lattice, &ids)
}
