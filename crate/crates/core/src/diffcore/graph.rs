//! Per-forward-pass computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Calling
//! [`Graph::backward`] on a scalar node walks the record in reverse creation
//! order and accumulates gradients into every node that depends on a
//! parameter or a gradient-tracking leaf. Graphs are built fresh for each
//! forward pass and dropped afterwards.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};

use super::linalg::{gemm, Layout};
use super::params::ParamStore;
use super::{Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation with a hand-written backward rule, defined outside this module.
///
/// `backward` receives the forward output, the upstream gradient and the
/// input values, and returns one gradient per input (same shapes).
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn backward(&self, output: &Tensor, upstream: &Tensor, inputs: &[&Tensor]) -> Vec<Tensor>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { input: Var, axis: usize, start: usize },
    Reshape(Var),
    Conv2d { input: Var, kernel: Var, bias: Var, pad: (usize, usize) },
    MaxPool { input: Var, argmax: Vec<usize> },
    ColumnsToRows(Var),
    LstmCell { gates: Var, c_prev: Var },
    Sum(Var),
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::LeakyRelu(a, _)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::Reshape(a)
            | Op::ColumnsToRows(a)
            | Op::Sum(a) => vec![*a],
            Op::Concat { inputs, .. } | Op::Custom { inputs, .. } => inputs.clone(),
            Op::Narrow { input, .. } | Op::MaxPool { input, .. } => vec![*input],
            Op::Conv2d { input, kernel, bias, .. } => vec![*input, *kernel, *bias],
            Op::LstmCell { gates, c_prev } => vec![*gates, *c_prev],
        }
    }
}

/// Record of a forward computation.
#[derive(Default)]
pub struct Graph {
    values: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
    ops: Vec<Op>,
    requires_grad: Vec<bool>,
    param_names: Vec<Option<String>>,
    params: HashMap<String, Var>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large `|x|`.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(
            op,
            format!("operands {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hash of every piecewise choice made so far: which side of zero each
    /// leaky-ReLU input fell on and which element each max-pool window kept.
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for op in &self.ops {
            match op {
                Op::LeakyRelu(a, _) => {
                    for v in self.values[a.0].data() {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires = op.inputs().iter().any(|v| self.requires_grad[v.0]);
        self.push_with(value, op, requires)
    }

    fn push_with(&mut self, value: Tensor, op: Op, requires: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        self.requires_grad.push(requires);
        self.param_names.push(None);
        Var(self.values.len() - 1)
    }

    /// Constant leaf; no gradient is tracked for it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_with(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_with(value, Op::Leaf, true)
    }

    /// Leaf holding a copy of the named parameter. Repeated calls with the
    /// same name return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, TensorError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.push_with(value, Op::Leaf, true);
        self.param_names[v.0] = Some(name.to_string());
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradients of every parameter used in this graph, zero-filled for
    /// parameters that did not influence the root.
    pub fn param_grads(&self) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, &v)| {
                let g = self.grads[v.0]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(self.values[v.0].shape()));
                (name.clone(), g)
            })
            .collect()
    }

    /// Registers the result of an externally computed operation.
    pub fn custom(&mut self, inputs: Vec<Var>, value: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(value, Op::Custom { inputs, op })
    }

    // ----------------------------------------------------------------------
    // Forward operations
    // ----------------------------------------------------------------------

    /// `[m, k] · [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.values[a.0].dims2("matmul")?;
        let (k2, n) = self.values[b.0].dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::shape(
                "matmul",
                format!("inner dimensions differ: [{m}, {k}] x [{k2}, {n}]"),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.values[a.0].data(),
            Layout::Normal,
            self.values[b.0].data(),
            Layout::Normal,
            0.0,
            &mut out,
        );
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// Adds a `[n]` bias to every row of a `[m, n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, n) = self.values[x.0].dims2("add_bias")?;
        let b = &self.values[bias.0];
        if b.shape() != [n] {
            return Err(TensorError::shape(
                "add_bias",
                format!("bias {:?} does not match {n} columns", b.shape()),
            ));
        }
        let mut out = self.values[x.0].clone();
        for r in 0..m {
            for (o, bv) in out.data_mut()[r * n..(r + 1) * n].iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    /// `x · w + b` for `x: [m, k]`, `w: [k, n]`, `b: [n]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        check_same_shape("add", &self.values[a.0], &self.values[b.0])?;
        let mut out = self.values[a.0].clone();
        out.add_assign(&self.values[b.0]);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        check_same_shape("mul", &self.values[a.0], &self.values[b.0])?;
        let mut out = self.values[a.0].clone();
        for (o, bv) in out.data_mut().iter_mut().zip(self.values[b.0].data()) {
            *o *= bv;
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.values[a.0].map(|v| v * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.values[a.0].map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.values[a.0].map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    fn last_dim(&self, op: &'static str, a: Var) -> Result<usize, TensorError> {
        match self.values[a.0].shape().last() {
            Some(&n) if n > 0 => Ok(n),
            _ => Err(TensorError::shape(
                op,
                format!("needs a non-empty last axis, got {:?}", self.values[a.0].shape()),
            )),
        }
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.last_dim("softmax", a)?;
        let mut out = self.values[a.0].clone();
        for row in out.data_mut().chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.last_dim("log_softmax", a)?;
        let mut out = self.values[a.0].clone();
        for row in out.data_mut().chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(self.push(out, Op::LogSoftmax(a)))
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        if inputs.is_empty() || axis > 1 {
            return Err(TensorError::shape(
                "concat",
                format!("needs at least one input and axis 0 or 1, got axis {axis}"),
            ));
        }
        let dims: Vec<(usize, usize)> = inputs
            .iter()
            .map(|v| self.values[v.0].dims2("concat"))
            .collect::<Result<_, _>>()?;
        let (r0, c0) = dims[0];
        let out = if axis == 0 {
            if let Some(bad) = dims.iter().find(|d| d.1 != c0) {
                return Err(TensorError::shape(
                    "concat",
                    format!("row concat needs equal column counts: {c0} vs {}", bad.1),
                ));
            }
            let rows: usize = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c0);
            for v in inputs {
                data.extend_from_slice(self.values[v.0].data());
            }
            Tensor::new(vec![rows, c0], data)?
        } else {
            if let Some(bad) = dims.iter().find(|d| d.0 != r0) {
                return Err(TensorError::shape(
                    "concat",
                    format!("column concat needs equal row counts: {r0} vs {}", bad.0),
                ));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for r in 0..r0 {
                for (v, d) in inputs.iter().zip(&dims) {
                    data.extend_from_slice(&self.values[v.0].data()[r * d.1..(r + 1) * d.1]);
                }
            }
            Tensor::new(vec![r0, cols], data)?
        };
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Slice `start..start + len` of a 2-D tensor along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let (r, c) = self.values[x.0].dims2("narrow")?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start + len > extent {
            return Err(TensorError::shape(
                "narrow",
                format!("range {start}..{} out of bounds for axis {axis} of [{r}, {c}]", start + len),
            ));
        }
        let src = self.values[x.0].data();
        let out = if axis == 0 {
            Tensor::new(vec![len, c], src[start * c..(start + len) * c].to_vec())?
        } else {
            let mut data = Vec::with_capacity(r * len);
            for row in 0..r {
                data.extend_from_slice(&src[row * c + start..row * c + start + len]);
            }
            Tensor::new(vec![r, len], data)?
        };
        Ok(self.push(out, Op::Narrow { input: x, axis, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let out = self.values[x.0].clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Stride-1 2-D convolution of a `[c_in, h, w]` input with a
    /// `[c_out, c_in, kh, kw]` kernel and `[c_out]` bias, zero padding `pad`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, pad: (usize, usize)) -> Result<Var, TensorError> {
        let (cin, h, w) = self.values[input.0].dims3("conv2d")?;
        let kshape = self.values[kernel.0].shape().to_vec();
        let [cout, kcin, kh, kw] = kshape[..] else {
            return Err(TensorError::shape("conv2d", format!("kernel must be 4-D, got {kshape:?}")));
        };
        if kcin != cin {
            return Err(TensorError::shape(
                "conv2d",
                format!("kernel expects {kcin} input channels, input has {cin}"),
            ));
        }
        if self.values[bias.0].shape() != [cout] {
            return Err(TensorError::shape(
                "conv2d",
                format!("bias {:?} does not match {cout} output channels", self.values[bias.0].shape()),
            ));
        }
        if h + 2 * pad.0 < kh || w + 2 * pad.1 < kw {
            return Err(TensorError::shape(
                "conv2d",
                format!("input [{h}, {w}] with padding {pad:?} is smaller than kernel [{kh}, {kw}]"),
            ));
        }
        let geom = ConvGeom { cin, h, w, kh, kw, pad };
        let (ho, wo) = geom.out_dims();
        let cols = geom.im2col(self.values[input.0].data());
        let mut out = vec![0.0; cout * ho * wo];
        gemm(
            cout,
            cin * kh * kw,
            ho * wo,
            self.values[kernel.0].data(),
            Layout::Normal,
            &cols,
            Layout::Normal,
            0.0,
            &mut out,
        );
        let b = self.values[bias.0].data();
        for (co, chunk) in out.chunks_mut(ho * wo).enumerate() {
            for v in chunk {
                *v += b[co];
            }
        }
        let t = Tensor::new(vec![cout, ho, wo], out)?;
        Ok(self.push(t, Op::Conv2d { input, kernel, bias, pad }))
    }

    /// Max pooling of a `[c, h, w]` tensor with window = stride = `(ph, pw)`.
    /// Partial windows at the bottom/right edges are kept, so the output is
    /// `[c, ceil(h / ph), ceil(w / pw)]`.
    pub fn max_pool(&mut self, input: Var, window: (usize, usize)) -> Result<Var, TensorError> {
        let (c, h, w) = self.values[input.0].dims3("max_pool")?;
        let (ph, pw) = window;
        if ph == 0 || pw == 0 || h == 0 || w == 0 {
            return Err(TensorError::shape(
                "max_pool",
                format!("window {window:?} over [{c}, {h}, {w}] is empty"),
            ));
        }
        let (ho, wo) = (h.div_ceil(ph), w.div_ceil(pw));
        let src = self.values[input.0].data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = base + oy * ph * w + ox * pw;
                    for y in oy * ph..((oy + 1) * ph).min(h) {
                        for x in ox * pw..((ox + 1) * pw).min(w) {
                            let i = base + y * w + x;
                            if src[i] > best {
                                best = src[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
        let t = Tensor::new(vec![c, ho, wo], out)?;
        Ok(self.push(t, Op::MaxPool { input, argmax }))
    }

    /// `[c, h, w] -> [w, c * h]`: one row per image column, channel-major.
    pub fn columns_to_rows(&mut self, input: Var) -> Result<Var, TensorError> {
        let (c, h, w) = self.values[input.0].dims3("columns_to_rows")?;
        let src = self.values[input.0].data();
        let mut out = vec![0.0; w * c * h];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[x * c * h + ch * h + y] = src[(ch * h + y) * w + x];
                }
            }
        }
        let t = Tensor::new(vec![w, c * h], out)?;
        Ok(self.push(t, Op::ColumnsToRows(input)))
    }

    /// One LSTM step. `gates` holds the `[n, 4h]` pre-activations in
    /// input/forget/cell/output order, `c_prev` the `[n, h]` cell state.
    /// Returns `[n, 2h]` with the new hidden state in the first `h` columns
    /// and the new cell state in the last `h`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Result<Var, TensorError> {
        let (n, g4) = self.values[gates.0].dims2("lstm_cell")?;
        let (n2, hd) = self.values[c_prev.0].dims2("lstm_cell")?;
        if n != n2 || g4 != 4 * hd {
            return Err(TensorError::shape(
                "lstm_cell",
                format!("gates [{n}, {g4}] incompatible with cell state [{n2}, {hd}]"),
            ));
        }
        let gv = self.values[gates.0].data();
        let cv = self.values[c_prev.0].data();
        let mut out = vec![0.0; n * 2 * hd];
        for r in 0..n {
            let g = &gv[r * g4..(r + 1) * g4];
            for j in 0..hd {
                let i = sigmoid(g[j]);
                let f = sigmoid(g[hd + j]);
                let cand = g[2 * hd + j].tanh();
                let o = sigmoid(g[3 * hd + j]);
                let c = f * cv[r * hd + j] + i * cand;
                out[r * 2 * hd + j] = o * c.tanh();
                out[r * 2 * hd + hd + j] = c;
            }
        }
        let t = Tensor::new(vec![n, 2 * hd], out)?;
        Ok(self.push(t, Op::LstmCell { gates, c_prev }))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.values[a.0].sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    // ----------------------------------------------------------------------
    // Backward pass
    // ----------------------------------------------------------------------

    /// Populates gradients of every tracked node with respect to `root`.
    pub fn backward(&mut self, root: Var) -> Result<(), TensorError> {
        if self.values[root.0].len() != 1 {
            return Err(TensorError::NonScalarRoot(self.values[root.0].shape().to_vec()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[root.0] = Some(Tensor::full(self.values[root.0].shape(), 1.0));
        for i in (0..=root.0).rev() {
            if !self.requires_grad[i] {
                continue;
            }
            let Some(upstream) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &upstream);
            self.grads[i] = Some(upstream);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, up: &Tensor) {
        let Graph {
            values,
            grads,
            ops,
            requires_grad,
            ..
        } = self;
        let values: &[Tensor] = values;
        let requires: &[bool] = requires_grad;
        let out = &values[i];

        macro_rules! slot {
            ($v:expr) => {
                grad_slot(grads, values, requires, $v)
            };
        }

        match &ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (values[a.0].shape()[0], values[a.0].shape()[1]);
                let n = values[b.0].shape()[1];
                if let Some(ga) = slot!(*a) {
                    gemm(m, n, k, up.data(), Layout::Normal, values[b.0].data(), Layout::Transposed, 1.0, ga);
                }
                if let Some(gb) = slot!(*b) {
                    gemm(k, m, n, values[a.0].data(), Layout::Transposed, up.data(), Layout::Normal, 1.0, gb);
                }
            }
            Op::AddBias(x, b) => {
                if let Some(gx) = slot!(*x) {
                    add_into(gx, up.data());
                }
                if let Some(gb) = slot!(*b) {
                    let n = gb.len();
                    for row in up.data().chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot!(*a) {
                    add_into(ga, up.data());
                }
                if let Some(gb) = slot!(*b) {
                    add_into(gb, up.data());
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = slot!(*a) {
                    for ((g, u), bv) in ga.iter_mut().zip(up.data()).zip(values[b.0].data()) {
                        *g += u * bv;
                    }
                }
                if let Some(gb) = slot!(*b) {
                    for ((g, u), av) in gb.iter_mut().zip(up.data()).zip(values[a.0].data()) {
                        *g += u * av;
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ga) = slot!(*a) {
                    for (g, u) in ga.iter_mut().zip(up.data()) {
                        *g += k * u;
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = slot!(*a) {
                    for ((g, u), s) in ga.iter_mut().zip(up.data()).zip(out.data()) {
                        *g += u * s * (1.0 - s);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = slot!(*a) {
                    for ((g, u), t) in ga.iter_mut().zip(up.data()).zip(out.data()) {
                        *g += u * (1.0 - t * t);
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                if let Some(ga) = slot!(*a) {
                    for ((g, u), x) in ga.iter_mut().zip(up.data()).zip(values[a.0].data()) {
                        *g += if *x > 0.0 { *u } else { slope * u };
                    }
                }
            }
            Op::Softmax(a) => {
                let n = *out.shape().last().unwrap();
                if let Some(ga) = slot!(*a) {
                    for ((g, u), s) in ga.chunks_mut(n).zip(up.data().chunks(n)).zip(out.data().chunks(n)) {
                        let dot: f64 = u.iter().zip(s).map(|(x, y)| x * y).sum();
                        for j in 0..n {
                            g[j] += s[j] * (u[j] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let n = *out.shape().last().unwrap();
                if let Some(ga) = slot!(*a) {
                    for ((g, u), l) in ga.chunks_mut(n).zip(up.data().chunks(n)).zip(out.data().chunks(n)) {
                        let total: f64 = u.iter().sum();
                        for j in 0..n {
                            g[j] += u[j] - l[j].exp() * total;
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let cols_out = out.shape()[1];
                let mut offset = 0;
                for v in inputs {
                    let (r, c) = (values[v.0].shape()[0], values[v.0].shape()[1]);
                    if let Some(gv) = slot!(*v) {
                        if *axis == 0 {
                            add_into(gv, &up.data()[offset * cols_out..(offset + r) * cols_out]);
                        } else {
                            for row in 0..r {
                                add_into(
                                    &mut gv[row * c..(row + 1) * c],
                                    &up.data()[row * cols_out + offset..row * cols_out + offset + c],
                                );
                            }
                        }
                    }
                    offset += if *axis == 0 { r } else { c };
                }
            }
            Op::Narrow { input, axis, start } => {
                let c = values[input.0].shape()[1];
                let (ro, co) = (out.shape()[0], out.shape()[1]);
                if let Some(gx) = slot!(*input) {
                    if *axis == 0 {
                        add_into(&mut gx[start * c..(start + ro) * c], up.data());
                    } else {
                        for row in 0..ro {
                            add_into(
                                &mut gx[row * c + start..row * c + start + co],
                                &up.data()[row * co..(row + 1) * co],
                            );
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = slot!(*a) {
                    add_into(ga, up.data());
                }
            }
            Op::Conv2d { input, kernel, bias, pad } => {
                let (cin, h, w) = (values[input.0].shape()[0], values[input.0].shape()[1], values[input.0].shape()[2]);
                let ks = values[kernel.0].shape();
                let (cout, kh, kw) = (ks[0], ks[2], ks[3]);
                let geom = ConvGeom { cin, h, w, kh, kw, pad: *pad };
                let (ho, wo) = geom.out_dims();
                let patch = cin * kh * kw;
                if let Some(gb) = slot!(*bias) {
                    for (co, chunk) in up.data().chunks(ho * wo).enumerate() {
                        gb[co] += chunk.iter().sum::<f64>();
                    }
                }
                let need_kernel = requires[kernel.0];
                let need_input = requires[input.0];
                if need_kernel {
                    let cols = geom.im2col(values[input.0].data());
                    let gk = slot!(*kernel).unwrap();
                    gemm(cout, ho * wo, patch, up.data(), Layout::Normal, &cols, Layout::Transposed, 1.0, gk);
                }
                if need_input {
                    let mut dcols = vec![0.0; patch * ho * wo];
                    gemm(
                        patch,
                        cout,
                        ho * wo,
                        values[kernel.0].data(),
                        Layout::Transposed,
                        up.data(),
                        Layout::Normal,
                        0.0,
                        &mut dcols,
                    );
                    let gx = slot!(*input).unwrap();
                    geom.col2im_add(&dcols, gx);
                }
            }
            Op::MaxPool { input, argmax } => {
                if let Some(gx) = slot!(*input) {
                    for (u, &src) in up.data().iter().zip(argmax) {
                        gx[src] += u;
                    }
                }
            }
            Op::ColumnsToRows(input) => {
                let s = values[input.0].shape();
                let (c, h, w) = (s[0], s[1], s[2]);
                if let Some(gx) = slot!(*input) {
                    let u = up.data();
                    for ch in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                gx[(ch * h + y) * w + x] += u[x * c * h + ch * h + y];
                            }
                        }
                    }
                }
            }
            Op::LstmCell { gates, c_prev } => {
                let (n, g4) = (values[gates.0].shape()[0], values[gates.0].shape()[1]);
                let hd = g4 / 4;
                let gv = values[gates.0].data();
                let cv = values[c_prev.0].data();
                let ov = out.data();
                let u = up.data();
                let mut d_gates = vec![0.0; n * g4];
                let mut d_cprev = vec![0.0; n * hd];
                for r in 0..n {
                    let g = &gv[r * g4..(r + 1) * g4];
                    for j in 0..hd {
                        let i = sigmoid(g[j]);
                        let f = sigmoid(g[hd + j]);
                        let cand = g[2 * hd + j].tanh();
                        let o = sigmoid(g[3 * hd + j]);
                        let c = ov[r * 2 * hd + hd + j];
                        let tc = c.tanh();
                        let dh = u[r * 2 * hd + j];
                        let dc = u[r * 2 * hd + hd + j] + dh * o * (1.0 - tc * tc);
                        let dg = &mut d_gates[r * g4..(r + 1) * g4];
                        dg[j] = dc * cand * i * (1.0 - i);
                        dg[hd + j] = dc * cv[r * hd + j] * f * (1.0 - f);
                        dg[2 * hd + j] = dc * i * (1.0 - cand * cand);
                        dg[3 * hd + j] = dh * tc * o * (1.0 - o);
                        d_cprev[r * hd + j] = dc * f;
                    }
                }
                if let Some(gg) = slot!(*gates) {
                    add_into(gg, &d_gates);
                }
                if let Some(gc) = slot!(*c_prev) {
                    add_into(gc, &d_cprev);
                }
            }
            Op::Sum(a) => {
                let u = up.data()[0];
                if let Some(ga) = slot!(*a) {
                    for g in ga.iter_mut() {
                        *g += u;
                    }
                }
            }
            Op::Custom { inputs, op } => {
                let in_values: Vec<&Tensor> = inputs.iter().map(|v| &values[v.0]).collect();
                let contributions = op.backward(out, up, &in_values);
                debug_assert_eq!(contributions.len(), inputs.len(), "{}", op.name());
                for (v, g) in inputs.iter().zip(contributions) {
                    if let Some(gv) = slot!(*v) {
                        add_into(gv, g.data());
                    }
                }
            }
        }
    }
}

/// Lazily zero-initialised gradient buffer of a tracked node.
fn grad_slot<'a>(
    grads: &'a mut [Option<Tensor>],
    values: &[Tensor],
    requires: &[bool],
    v: Var,
) -> Option<&'a mut [f64]> {
    if !requires[v.0] {
        return None;
    }
    Some(
        grads[v.0]
            .get_or_insert_with(|| Tensor::zeros(values[v.0].shape()))
            .data_mut(),
    )
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: (usize, usize),
}

impl ConvGeom {
    fn out_dims(&self) -> (usize, usize) {
        (
            self.h + 2 * self.pad.0 + 1 - self.kh,
            self.w + 2 * self.pad.1 + 1 - self.kw,
        )
    }

    /// `[cin * kh * kw, ho * wo]` patch matrix.
    fn im2col(&self, src: &[f64]) -> Vec<f64> {
        let (ho, wo) = self.out_dims();
        let mut cols = vec![0.0; self.cin * self.kh * self.kw * ho * wo];
        let (ph, pw) = (self.pad.0 as isize, self.pad.1 as isize);
        for c in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                    for oy in 0..ho {
                        let y = oy as isize + ky as isize - ph;
                        if y < 0 || y >= self.h as isize {
                            continue;
                        }
                        let srow = &src[(c * self.h + y as usize) * self.w..][..self.w];
                        let drow = &mut dst[oy * wo..(oy + 1) * wo];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let x = ox as isize + kx as isize - pw;
                            if x >= 0 && x < self.w as isize {
                                *d = srow[x as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im_add(&self, cols: &[f64], dst: &mut [f64]) {
        let (ho, wo) = self.out_dims();
        let (ph, pw) = (self.pad.0 as isize, self.pad.1 as isize);
        for c in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                    for oy in 0..ho {
                        let y = oy as isize + ky as isize - ph;
                        if y < 0 || y >= self.h as isize {
                            continue;
                        }
                        let drow = &mut dst[(c * self.h + y as usize) * self.w..][..self.w];
                        for ox in 0..wo {
                            let x = ox as isize + kx as isize - pw;
                            if x >= 0 && x < self.w as isize {
                                drow[x as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
