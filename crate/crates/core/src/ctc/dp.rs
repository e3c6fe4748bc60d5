//! Forward-backward recursion over the blank-extended target, in log space.

use super::CtcError;

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Shortest lattice that can emit `target`: one frame per label plus one
/// separating blank per adjacent repeat.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

pub(crate) fn check_target(target: &[usize], classes: usize, blank: usize) -> Result<(), CtcError> {
    for &k in target {
        if k == blank {
            return Err(CtcError::BlankInTarget);
        }
        if k >= classes {
            return Err(CtcError::TargetOutOfVocabulary { index: k, classes });
        }
    }
    Ok(())
}

fn extended(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &k in target {
        ext.push(k);
        ext.push(blank);
    }
    ext
}

/// `-ln P(target | lattice)` for a row-major `frames x classes` lattice of
/// log-probabilities; infinite when no alignment exists.
pub fn ctc_nll(logp: &[f64], frames: usize, classes: usize, target: &[usize], blank: usize) -> Result<f64, CtcError> {
    check_target(target, classes, blank)?;
    if logp.len() != frames * classes {
        return Err(CtcError::LatticeShape { len: logp.len(), frames, classes });
    }
    if frames == 0 || frames < min_frames(target) {
        return Ok(f64::INFINITY);
    }
    let alpha = forward(logp, frames, classes, &extended(target, blank), blank);
    Ok(-final_logp(&alpha, frames, 2 * target.len() + 1))
}

fn final_logp(alpha: &[f64], frames: usize, s: usize) -> f64 {
    let last = &alpha[(frames - 1) * s..];
    if s == 1 {
        last[0]
    } else {
        log_add(last[s - 1], last[s - 2])
    }
}

fn forward(logp: &[f64], frames: usize, classes: usize, ext: &[usize], blank: usize) -> Vec<f64> {
    let s = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; frames * s];
    alpha[0] = logp[ext[0]];
    if s > 1 {
        alpha[1] = logp[ext[1]];
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * s);
        let prev = &prev[(t - 1) * s..];
        let row = &logp[t * classes..(t + 1) * classes];
        for j in 0..s {
            let mut acc = prev[j];
            if j >= 1 {
                acc = log_add(acc, prev[j - 1]);
            }
            if j >= 2 && ext[j] != blank && ext[j] != ext[j - 2] {
                acc = log_add(acc, prev[j - 2]);
            }
            cur[j] = acc + row[ext[j]];
        }
    }
    alpha
}

/// `beta[t][j]`: log-probability of finishing the target from state `j`
/// at frame `t`, excluding the emission at `t`.
fn backward(logp: &[f64], frames: usize, classes: usize, ext: &[usize], blank: usize) -> Vec<f64> {
    let s = ext.len();
    let mut beta = vec![f64::NEG_INFINITY; frames * s];
    beta[(frames - 1) * s + s - 1] = 0.0;
    if s > 1 {
        beta[(frames - 1) * s + s - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        let next_row = &logp[(t + 1) * classes..(t + 2) * classes];
        for j in 0..s {
            let nb = &beta[(t + 1) * s..(t + 2) * s];
            let mut acc = nb[j] + next_row[ext[j]];
            if j + 1 < s {
                acc = log_add(acc, nb[j + 1] + next_row[ext[j + 1]]);
            }
            if j + 2 < s && ext[j + 2] != blank && ext[j + 2] != ext[j] {
                acc = log_add(acc, nb[j + 2] + next_row[ext[j + 2]]);
            }
            beta[t * s + j] = acc;
        }
    }
    beta
}

/// Loss and its gradient with respect to every lattice entry. The gradient
/// is all zeros when the loss is infinite.
pub fn ctc_nll_with_grad(
    logp: &[f64],
    frames: usize,
    classes: usize,
    target: &[usize],
    blank: usize,
) -> Result<(f64, Vec<f64>), CtcError> {
    let nll = ctc_nll(logp, frames, classes, target, blank)?;
    let mut grad = vec![0.0; frames * classes];
    if !nll.is_finite() {
        return Ok((nll, grad));
    }
    let ext = extended(target, blank);
    let s = ext.len();
    let alpha = forward(logp, frames, classes, &ext, blank);
    let beta = backward(logp, frames, classes, &ext, blank);
    let logp_total = -nll;
    for t in 0..frames {
        let mut occ = vec![f64::NEG_INFINITY; classes];
        for j in 0..s {
            occ[ext[j]] = log_add(occ[ext[j]], alpha[t * s + j] + beta[t * s + j]);
        }
        for (k, o) in occ.into_iter().enumerate() {
            if o > f64::NEG_INFINITY {
                grad[t * classes + k] = -(o - logp_total).exp();
            }
        }
    }
    Ok((nll, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln(v: &[f64]) -> Vec<f64> {
        v.iter().map(|p| p.ln()).collect()
    }

    #[test]
    fn single_frame_single_label() {
        let lattice = ln(&[0.3, 0.7]);
        let nll = ctc_nll(&lattice, 1, 2, &[1], 0).unwrap();
        assert!((nll + 0.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_one_label_sums_three_alignments() {
        // rows: (blank, a)
        let p = [[0.4, 0.6], [0.25, 0.75]];
        let lattice = ln(&[p[0][0], p[0][1], p[1][0], p[1][1]]);
        let want = -(p[0][1] * p[1][1] + p[0][1] * p[1][0] + p[0][0] * p[1][1]).ln();
        assert!((ctc_nll(&lattice, 2, 2, &[1], 0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_invalid_targets() {
        let lattice = ln(&[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(ctc_nll(&lattice, 2, 2, &[1, 1], 0).unwrap(), f64::INFINITY);
        assert_eq!(min_frames(&[1, 1, 2, 2, 2]), 8);
        assert!(matches!(ctc_nll(&lattice, 2, 2, &[0], 0), Err(CtcError::BlankInTarget)));
        assert!(matches!(
            ctc_nll(&lattice, 2, 2, &[2], 0),
            Err(CtcError::TargetOutOfVocabulary { index: 2, classes: 2 })
        ));
    }

    #[test]
    fn empty_target_is_all_blank() {
        let lattice = ln(&[0.9, 0.1, 0.8, 0.2]);
        let want = -(0.9f64 * 0.8).ln();
        assert!((ctc_nll(&lattice, 2, 2, &[], 0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn occupancy_gradient_rows_sum_to_minus_one() {
        // every frame is occupied by exactly one state on every path
        let lattice = ln(&[0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2]);
        let (_, g) = ctc_nll_with_grad(&lattice, 3, 3, &[1, 2], 0).unwrap();
        for row in g.chunks(3) {
            assert!((row.iter().sum::<f64>() + 1.0).abs() < 1e-12);
        }
    }
}
