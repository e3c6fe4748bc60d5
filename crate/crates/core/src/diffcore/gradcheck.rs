//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, Graph, ParamStore, TensorError, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step `h`; each entry is probed at `w ± h`.
    pub step: f64,
    /// Largest acceptable relative error.
    pub tolerance: f64,
    /// Entries probed per parameter tensor; smaller tensors are checked fully.
    pub max_entries_per_param: usize,
    /// Denominator floor for the relative error, so entries whose analytic and
    /// numeric gradients are both below it are compared absolutely.
    pub abs_floor: f64,
    /// When positive, the floor is raised to `roundoff_ulps * EPSILON * |f| /
    /// (step * tolerance)`: below that size, rounding in `f` itself moves the
    /// central difference by more than the tolerance allows.
    pub roundoff_ulps: f64,
    /// Seed for choosing which entries to probe.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_entries_per_param: 32,
            abs_floor: 1e-6,
            roundoff_ulps: 0.0,
            seed: 0,
        }
    }
}

/// Worst entry of one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Probes discarded because `w - h`, `w` and `w + h` did not share one
    /// smooth piece of the function; replaced by other entries when possible.
    pub straddled: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
    /// Denominator floor actually applied.
    pub floor: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    /// Every tensor had at least one valid probe and none exceeded the tolerance.
    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.params
            .iter()
            .filter(|p| p.checked == 0 || !(p.max_rel_error <= self.tolerance))
            .collect()
    }

    pub fn straddled(&self) -> usize {
        self.params.iter().map(|p| p.straddled).sum()
    }
}

/// Compares `analytic` against central differences of `f` around `params`.
pub fn check_gradients<E>(
    mut f: impl FnMut(&ParamStore) -> Result<f64, E>,
    params: &ParamStore,
    analytic: &Gradients,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, E> {
    check_pieces(|p| Ok((f(p)?, 0)), params, analytic, opts)
}

/// Like [`check_gradients`], but `f` also returns a branch signature; probes
/// whose two evaluations disagree with the signature at `params` are skipped.
fn check_pieces<E>(
    mut f: impl FnMut(&ParamStore) -> Result<(f64, u64), E>,
    params: &ParamStore,
    analytic: &Gradients,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, E> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (at, base) = f(params)?;
    let floor = opts
        .abs_floor
        .max(opts.roundoff_ulps * f64::EPSILON * at.abs() / (opts.step * opts.tolerance));
    let mut probe = params.clone();
    let mut reports = Vec::new();
    for (name, value) in params.iter() {
        let n = value.len();
        // spare candidates replace straddling probes
        let candidates: Vec<usize> = if n <= opts.max_entries_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, n.min(4 * opts.max_entries_per_param)).into_vec()
        };
        let grad = analytic.get(name);
        let mut worst = ParamCheck {
            name: name.clone(),
            checked: 0,
            straddled: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in candidates {
            if worst.checked == opts.max_entries_per_param {
                break;
            }
            let original = value.data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = original + opts.step;
            let (plus, sp) = f(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = original - opts.step;
            let (minus, sm) = f(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = original;
            if sp != base || sm != base {
                worst.straddled += 1;
                continue;
            }
            worst.checked += 1;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad.map_or(0.0, |g| g.data()[i]);
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            // NaN must register as a failure
            if !(rel <= worst.max_rel_error) {
                worst.max_rel_error = rel;
                worst.worst_index = i;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        reports.push(worst);
    }
    Ok(GradCheckReport {
        params: reports,
        tolerance: opts.tolerance,
        floor,
    })
}

/// Builds the scalar `build(graph, params)`, differentiates it and checks
/// every parameter gradient against central differences. Probes that cross a
/// leaky-ReLU or max-pool switch are replaced, since finite differences are no
/// oracle for the one-sided derivative there.
pub fn grad_check<E: From<TensorError>>(
    mut build: impl FnMut(&mut Graph, &ParamStore) -> Result<Var, E>,
    params: &ParamStore,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, E> {
    let mut g = Graph::new();
    let root = build(&mut g, params)?;
    g.backward(root)?;
    let analytic = g.param_grads();
    check_pieces(
        |p| {
            let mut g = Graph::new();
            let root = build(&mut g, p)?;
            Ok((g.value(root).data()[0], g.branch_signature()))
        },
        params,
        &analytic,
        opts,
    )
}

