//! Probability of a whole flag configuration under the factorized flag
//! head: independent sigmoids for the staff bits, and per note-matrix row a
//! rhythm softmax (class 0 = `noNote`) times, for occupied rows only, an
//! accidental softmax. Summed over every configuration this is exactly 1.

use crate::codecs::{FlagConfiguration, FLAG_ACCIDENTAL_CLASSES, FLAG_RHYTHM_CLASSES, FLAG_ROWS, FLAG_STAFF_BITS};
use crate::diffcore::{log_sigmoid, sigmoid as sig, CustomOp, Graph, Tensor, TensorError, Var};

use super::CtcError;

/// Dimensions of a flag alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlagSpace {
    pub staff_bits: usize,
    pub rows: usize,
    /// Including `noNote` at class 0.
    pub rhythm_classes: usize,
    pub accidental_classes: usize,
}

impl FlagSpace {
    pub const FULL: FlagSpace = FlagSpace {
        staff_bits: FLAG_STAFF_BITS,
        rows: FLAG_ROWS,
        rhythm_classes: FLAG_RHYTHM_CLASSES,
        accidental_classes: FLAG_ACCIDENTAL_CLASSES,
    };

    /// Activations per slice.
    pub fn width(&self) -> usize {
        self.staff_bits + self.rows * (self.rhythm_classes + self.accidental_classes)
    }

    /// Number of distinct configurations, if it fits in a `u128`.
    pub fn size(&self) -> Option<u128> {
        let row = 1 + (self.rhythm_classes as u128 - 1) * self.accidental_classes as u128;
        let bits = 1u128.checked_shl(self.staff_bits as u32)?;
        (0..self.rows).try_fold(bits, |acc, _| acc.checked_mul(row))
    }

    /// Every configuration, in a fixed order. Panics if there are more than 2^24.
    pub fn enumerate(&self) -> Vec<FlagSymbol> {
        let n = self.size().filter(|&n| n <= 1 << 24).expect("flag space too large to enumerate") as usize;
        let row_choices: Vec<(usize, usize)> = std::iter::once((0, 0))
            .chain((1..self.rhythm_classes).flat_map(|r| (0..self.accidental_classes).map(move |a| (r, a))))
            .collect();
        let mut out = Vec::with_capacity(n);
        for mut i in 0..n {
            let bits = (0..self.staff_bits).map(|b| (i >> b) & 1 == 1).collect();
            i >>= self.staff_bits;
            let mut rows = Vec::with_capacity(self.rows);
            for _ in 0..self.rows {
                rows.push(row_choices[i % row_choices.len()]);
                i /= row_choices.len();
            }
            out.push(FlagSymbol { bits, rows });
        }
        out
    }
}

/// A configuration of any [`FlagSpace`]: staff bits plus `(rhythm class,
/// accidental class)` per row.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FlagSymbol {
    pub bits: Vec<bool>,
    pub rows: Vec<(usize, usize)>,
}

impl FlagSymbol {
    pub fn blank(space: &FlagSpace) -> Self {
        Self {
            bits: vec![false; space.staff_bits],
            rows: vec![(0, 0); space.rows],
        }
    }

    pub fn is_blank(&self) -> bool {
        self.bits.iter().all(|b| !b) && self.rows.iter().all(|r| r.0 == 0)
    }

    fn fits(&self, space: &FlagSpace) -> bool {
        self.bits.len() == space.staff_bits
            && self.rows.len() == space.rows
            && self
                .rows
                .iter()
                .all(|&(r, a)| r < space.rhythm_classes && a < space.accidental_classes)
    }
}

impl From<&FlagConfiguration> for FlagSymbol {
    fn from(c: &FlagConfiguration) -> Self {
        Self {
            bits: (0..FLAG_STAFF_BITS).map(|i| c.bit(i)).collect(),
            rows: (0..FLAG_ROWS)
                .map(|r| {
                    let (rc, ac) = c.row(r);
                    (rc as usize, ac as usize)
                })
                .collect(),
        }
    }
}

/// One slice of flag-head output: raw staff logits and normalized
/// log-probabilities of each row's rhythm and accidental.
#[derive(Clone, Debug, PartialEq)]
pub struct FlagActivation<'a> {
    pub space: FlagSpace,
    pub staff_logits: &'a [f64],
    /// `rows x rhythm_classes`, each row log-normalized.
    pub rhythm_logp: &'a [f64],
    /// `rows x accidental_classes`, each row log-normalized.
    pub accidental_logp: &'a [f64],
}

/// `ln P(symbol)` under one slice of activations.
pub fn flag_symbol_logprob(act: &FlagActivation, symbol: &FlagSymbol) -> f64 {
    let sp = &act.space;
    let mut lp = 0.0;
    for (i, &on) in symbol.bits.iter().enumerate() {
        let x = act.staff_logits[i];
        lp += if on { log_sigmoid(x) } else { log_sigmoid(-x) };
    }
    for (r, &(rc, ac)) in symbol.rows.iter().enumerate() {
        lp += act.rhythm_logp[r * sp.rhythm_classes + rc];
        if rc != 0 {
            lp += act.accidental_logp[r * sp.accidental_classes + ac];
        }
    }
    lp
}

/// Builds a `frames x (1 + symbols.len())` log-probability lattice:
/// column 0 is the all-off configuration, column `j + 1` is `symbols[j]`.
///
/// `staff_logits` is `[frames, staff_bits]`, `rhythm_logp` is
/// `[frames * rows, rhythm_classes]` and `accidental_logp` is
/// `[frames * rows, accidental_classes]`, both log-normalized per row.
pub fn flag_lattice(
    g: &mut Graph,
    space: FlagSpace,
    staff_logits: Var,
    rhythm_logp: Var,
    accidental_logp: Var,
    symbols: &[FlagSymbol],
) -> Result<Var, CtcError> {
    let (frames, sb) = g.value(staff_logits).dims2("flag_lattice")?;
    let (rr, rc) = g.value(rhythm_logp).dims2("flag_lattice")?;
    let (ar, ac) = g.value(accidental_logp).dims2("flag_lattice")?;
    if sb != space.staff_bits
        || rc != space.rhythm_classes
        || ac != space.accidental_classes
        || rr != frames * space.rows
        || ar != frames * space.rows
    {
        return Err(TensorError::ShapeMismatch {
            op: "flag_lattice",
            detail: format!("activations [{frames},{sb}], [{rr},{rc}], [{ar},{ac}] do not match {space:?}"),
        }
        .into());
    }
    let mut columns = vec![FlagSymbol::blank(&space)];
    for s in symbols {
        if !s.fits(&space) {
            return Err(CtcError::SymbolOutsideSpace);
        }
        if s.is_blank() {
            return Err(CtcError::BlankInTarget);
        }
        columns.push(s.clone());
    }
    let (sl, rl, al) = (
        g.value(staff_logits).data(),
        g.value(rhythm_logp).data(),
        g.value(accidental_logp).data(),
    );
    let width = columns.len();
    let mut out = vec![0.0; frames * width];
    for t in 0..frames {
        let act = FlagActivation {
            space,
            staff_logits: &sl[t * sb..(t + 1) * sb],
            rhythm_logp: &rl[t * space.rows * rc..(t + 1) * space.rows * rc],
            accidental_logp: &al[t * space.rows * ac..(t + 1) * space.rows * ac],
        };
        for (j, col) in columns.iter().enumerate() {
            out[t * width + j] = flag_symbol_logprob(&act, col);
        }
    }
    let value = Tensor::new(vec![frames, width], out)?;
    Ok(g.custom(
        vec![staff_logits, rhythm_logp, accidental_logp],
        value,
        Box::new(FlagLatticeOp { space, columns }),
    ))
}

struct FlagLatticeOp {
    space: FlagSpace,
    columns: Vec<FlagSymbol>,
}

impl CustomOp for FlagLatticeOp {
    fn name(&self) -> &'static str {
        "flag_lattice"
    }

    fn backward(&self, _output: &Tensor, upstream: &Tensor, inputs: &[&Tensor]) -> Vec<Tensor> {
        let sp = self.space;
        let frames = inputs[0].shape()[0];
        let width = self.columns.len();
        let mut gs = Tensor::zeros(inputs[0].shape());
        let mut gr = Tensor::zeros(inputs[1].shape());
        let mut ga = Tensor::zeros(inputs[2].shape());
        let x = inputs[0].data();
        for t in 0..frames {
            for (j, col) in self.columns.iter().enumerate() {
                let u = upstream.data()[t * width + j];
                if u == 0.0 {
                    continue;
                }
                let gsd = gs.data_mut();
                for (i, &on) in col.bits.iter().enumerate() {
                    let xi = x[t * sp.staff_bits + i];
                    // d ln σ(x) = σ(-x); d ln σ(-x) = -σ(x)
                    gsd[t * sp.staff_bits + i] += u * if on { sig(-xi) } else { -sig(xi) };
                }
                for (r, &(rc, ac)) in col.rows.iter().enumerate() {
                    let row = t * sp.rows + r;
                    gr.data_mut()[row * sp.rhythm_classes + rc] += u;
                    if rc != 0 {
                        ga.data_mut()[row * sp.accidental_classes + ac] += u;
                    }
                }
            }
        }
        vec![gs, gr, ga]
    }
}
