use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::diffcore::{Graph, ParamStore, Tensor, Var};

/// Convolutional stack, column projection and bidirectional LSTM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_height: usize,
    pub filters: Vec<usize>,
    pub kernel: (usize, usize),
    /// Max-pool window (height, width) per block.
    pub pools: Vec<(usize, usize)>,
    pub leaky_slope: f64,
    /// Width of the per-column projection feeding the recurrent stage.
    pub projection: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_height: 128,
            filters: vec![32, 64, 128, 256],
            kernel: (3, 3),
            pools: vec![(2, 2), (2, 2), (2, 1), (2, 1)],
            leaky_slope: 0.2,
            projection: 512,
            lstm_hidden: 256,
            lstm_layers: 2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |why: String| Err(ModelError::Config(why));
        if self.filters.is_empty() || self.filters.len() != self.pools.len() {
            return bad(format!("{} filter counts for {} pools", self.filters.len(), self.pools.len()));
        }
        if self.kernel.0 % 2 == 0 || self.kernel.1 % 2 == 0 {
            return bad(format!("kernel {:?} must be odd", self.kernel));
        }
        if self.pools.iter().any(|&(h, w)| h == 0 || w == 0) || self.filters.contains(&0) {
            return bad("zero-sized filter or pool".into());
        }
        if self.input_height % self.height_factor() != 0 {
            return bad(format!("input height {} not divisible by {}", self.input_height, self.height_factor()));
        }
        if self.projection == 0 || self.lstm_hidden == 0 || self.lstm_layers == 0 {
            return bad("empty recurrent stage".into());
        }
        Ok(())
    }

    pub fn height_factor(&self) -> usize {
        self.pools.iter().map(|p| p.0).product()
    }

    pub fn width_factor(&self) -> usize {
        self.pools.iter().map(|p| p.1).product()
    }

    /// Number of slices for an input `width` columns wide.
    pub fn slices(&self, width: usize) -> usize {
        self.pools.iter().fold(width, |w, p| w.div_ceil(p.1))
    }

    /// Dimension of one slice encoding.
    pub fn output_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    fn column_features(&self) -> usize {
        self.filters.last().copied().unwrap_or(0) * (self.input_height / self.height_factor())
    }

    pub(super) fn init(&self, rng: &mut impl Rng, p: &mut ParamStore) {
        let (kh, kw) = self.kernel;
        let mut cin = 1;
        for (i, &cout) in self.filters.iter().enumerate() {
            p.init_rectifier(rng, &format!("enc.conv{i}.w"), &[cout, cin, kh, kw], cin * kh * kw, self.leaky_slope);
            p.init_zeros(&format!("enc.conv{i}.b"), &[cout]);
            cin = cout;
        }
        let cf = self.column_features();
        p.init_rectifier(rng, "enc.proj.w", &[cf, self.projection], cf, 1.0);
        p.init_zeros("enc.proj.b", &[self.projection]);
        let h = self.lstm_hidden;
        let mut din = self.projection;
        for l in 0..self.lstm_layers {
            for dir in ["fw", "bw"] {
                let pre = format!("enc.lstm{l}.{dir}");
                p.init_uniform(rng, &format!("{pre}.wx"), &[din, 4 * h], din);
                p.init_uniform(rng, &format!("{pre}.wh"), &[h, 4 * h], h);
                // forget gate starts open
                let b = (0..4 * h).map(|j| if j / h == 1 { 1.0 } else { 0.0 }).collect();
                p.insert(format!("{pre}.b"), Tensor::new(vec![4 * h], b).expect("bias shape"));
            }
            din = 2 * h;
        }
    }

    /// Parameter count, from the layer shapes alone.
    pub fn param_count(&self) -> usize {
        let (kh, kw) = self.kernel;
        let mut n = 0;
        let mut cin = 1;
        for &cout in &self.filters {
            n += cout * cin * kh * kw + cout;
            cin = cout;
        }
        n += (self.column_features() + 1) * self.projection;
        let h = self.lstm_hidden;
        let mut din = self.projection;
        for _ in 0..self.lstm_layers {
            n += 2 * ((din + h + 1) * 4 * h);
            din = 2 * h;
        }
        n
    }
}

/// `[1, input_height, W]` image to `[slices(W), 2 * lstm_hidden]`.
pub fn encode(g: &mut Graph, p: &ParamStore, cfg: &EncoderConfig, image: Var) -> Result<Var, ModelError> {
    let shape = g.value(image).shape().to_vec();
    if shape.len() != 3 || shape[0] != 1 || shape[1] != cfg.input_height {
        return Err(ModelError::InputShape {
            expected: cfg.input_height,
            got: shape,
        });
    }
    if shape[2] < cfg.width_factor() {
        return Err(ModelError::TooNarrow {
            width: shape[2],
            min: cfg.width_factor(),
        });
    }
    let pad = (cfg.kernel.0 / 2, cfg.kernel.1 / 2);
    let mut x = image;
    for (i, &pool) in cfg.pools.iter().enumerate() {
        let w = g.param(p, &format!("enc.conv{i}.w"))?;
        let b = g.param(p, &format!("enc.conv{i}.b"))?;
        x = g.conv2d(x, w, b, pad)?;
        x = g.leaky_relu(x, cfg.leaky_slope);
        x = g.max_pool(x, pool)?;
    }
    let cols = g.columns_to_rows(x)?;
    let (pw, pb) = (g.param(p, "enc.proj.w")?, g.param(p, "enc.proj.b")?);
    let mut seq = g.affine(cols, pw, pb)?;
    for l in 0..cfg.lstm_layers {
        let f = lstm(g, p, &format!("enc.lstm{l}.fw"), seq, cfg.lstm_hidden, false)?;
        let b = lstm(g, p, &format!("enc.lstm{l}.bw"), seq, cfg.lstm_hidden, true)?;
        seq = g.concat(&[f, b], 1)?;
    }
    Ok(seq)
}

/// One LSTM direction over the rows of `x`; zero initial state.
fn lstm(g: &mut Graph, p: &ParamStore, prefix: &str, x: Var, hidden: usize, reverse: bool) -> Result<Var, ModelError> {
    let steps = g.value(x).shape()[0];
    let wx = g.param(p, &format!("{prefix}.wx"))?;
    let wh = g.param(p, &format!("{prefix}.wh"))?;
    let b = g.param(p, &format!("{prefix}.b"))?;
    let xg = g.affine(x, wx, b)?;
    let mut h = g.input(Tensor::zeros(&[1, hidden]));
    let mut c = g.input(Tensor::zeros(&[1, hidden]));
    let mut out = vec![h; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..steps).rev()) } else { Box::new(0..steps) };
    for t in order {
        let xt = g.narrow(xg, 0, t, 1)?;
        let recur = g.matmul(h, wh)?;
        let gates = g.add(xt, recur)?;
        let hc = g.lstm_cell(gates, c)?;
        h = g.narrow(hc, 1, 0, hidden)?;
        c = g.narrow(hc, 1, hidden, hidden)?;
        out[t] = h;
    }
    Ok(g.concat(&out, 0)?)
}
