use alloc::format;

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Result};
use crate::rng::Rng;

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / libm::sqrt(fan_in.max(1) as f64)
}

/// `y = x·W + b` on row vectors.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[input, output], fan_in_bound(input), rng);
        let b = store.add_zeros(format!("{name}.b"), &[output]);
        Self { w, b: Some(b) }
    }

    pub fn no_bias<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[input, output], fan_in_bound(input), rng);
        Self { w, b: None }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// 1D convolution with per-channel bias on `[channels × length]` inputs.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[cout, cin, kernel], fan_in_bound(cin * kernel), rng);
        let b = store.add_zeros(format!("{name}.b"), &[cout]);
        Self { w, b, stride, dilation, padding }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.conv1d(x, w, self.stride, self.dilation, self.padding)?;
        let b = g.param(self.b);
        g.add_col(y, b)
    }
}

/// Transposed 1D convolution with per-channel bias.
#[derive(Debug, Clone, Copy)]
pub struct ConvTranspose1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[cin, cout, kernel], fan_in_bound(cin * kernel / stride), rng);
        let b = store.add_zeros(format!("{name}.b"), &[cout]);
        Self { w, b, stride, dilation, padding }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.conv_transpose1d(x, w, self.stride, self.dilation, self.padding)?;
        let b = g.param(self.b);
        g.add_col(y, b)
    }
}

/// Weights of one LSTM cell; gates are packed `[input, forget, cell, output]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = fan_in_bound(hidden);
        let wx = store.add_uniform(format!("{name}.wx"), &[input, 4 * hidden], bound, rng);
        let wh = store.add_uniform(format!("{name}.wh"), &[hidden, 4 * hidden], bound, rng);
        let mut bias = alloc::vec![T::zero(); 4 * hidden];
        bias[hidden..2 * hidden].fill(T::one());
        let b = store.add(format!("{name}.b"), Tensor::new(&[4 * hidden], bias).expect("bias shape"));
        Self { wx, wh, b, input, hidden }
    }

    pub fn step<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let (wx, wh, b) = (g.param(self.wx), g.param(self.wh), g.param(self.b));
        lstm_step(g, x, h, c, wx, wh, b)
    }
}

/// One LSTM step on a batch of rows: `x[B×in]`, `h, c[B×H]`,
/// `wx[in×4H]`, `wh[H×4H]`, `b[4H]`.
pub fn lstm_step<T: Real>(
    g: &mut Graph<'_, T>,
    x: Var,
    h: Var,
    c: Var,
    wx: Var,
    wh: Var,
    b: Var,
) -> Result<(Var, Var)> {
    let (batch, hidden) = g.value(h).dims2()?;
    if g.value(c).dims2()? != (batch, hidden) || g.value(x).dims2()?.0 != batch {
        return Err(shape_err(format!(
            "lstm_step: x {:?}, h {:?}, c {:?}",
            g.shape(x),
            g.shape(h),
            g.shape(c)
        )));
    }
    let xw = g.matmul(x, wx)?;
    let hw = g.matmul(h, wh)?;
    let pre = g.add(xw, hw)?;
    let pre = g.add_row(pre, b)?;
    if g.value(pre).dims2()?.1 != 4 * hidden {
        return Err(shape_err(format!("lstm_step: gate width {:?} for hidden {hidden}", g.shape(pre))));
    }
    let i = g.slice_cols(pre, 0, hidden)?;
    let f = g.slice_cols(pre, hidden, hidden)?;
    let cand = g.slice_cols(pre, 2 * hidden, hidden)?;
    let o = g.slice_cols(pre, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// `softmax(q·kᵀ/√d)·v` for `q[Lq×d]`, `k[Lk×d]`, `v[Lk×dv]`.
pub fn scaled_dot_attention<T: Real>(g: &mut Graph<'_, T>, q: Var, k: Var, v: Var) -> Result<Var> {
    let (_, d) = g.value(q).dims2()?;
    let (lk, dk) = g.value(k).dims2()?;
    let (lv, _) = g.value(v).dims2()?;
    if d != dk || lk != lv {
        return Err(shape_err(format!("attention: q {:?}, k {:?}, v {:?}", g.shape(q), g.shape(k), g.shape(v))));
    }
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, T::from_f64(1.0 / libm::sqrt(d as f64)));
    let weights = g.softmax_rows(scores)?;
    g.matmul(weights, v)
}

/// Single-head cross-attention between a channel-first query sequence and a
/// channel-first context, residual-added to the query. Projections carry no
/// bias, so an all-zero context contributes nothing.
#[derive(Debug, Clone, Copy)]
pub struct CrossAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
}

impl CrossAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize, context_dim: usize, rng: &mut Rng) -> Self {
        Self {
            q: Linear::no_bias(store, &format!("{name}.q"), dim, dim, rng),
            k: Linear::no_bias(store, &format!("{name}.k"), context_dim, dim, rng),
            v: Linear::no_bias(store, &format!("{name}.v"), context_dim, dim, rng),
        }
    }

    /// `x[C×L]`, `context[C'×L']` → `[C×L]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, context: Var) -> Result<Var> {
        let xt = g.transpose(x)?;
        let ct = g.transpose(context)?;
        let q = self.q.forward(g, xt)?;
        let k = self.k.forward(g, ct)?;
        let v = self.v.forward(g, ct)?;
        let attended = scaled_dot_attention(g, q, k, v)?;
        let attended = g.transpose(attended)?;
        g.add(x, attended)
    }
}

/// `x + conv1x1(silu(dilated_conv(x)))`, channel-preserving.
#[derive(Debug, Clone, Copy)]
pub struct ResidualDilated {
    pub dilated: Conv1d,
    pub mix: Conv1d,
}

impl ResidualDilated {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, dilation: usize, rng: &mut Rng) -> Self {
        Self {
            dilated: Conv1d::new(store, &format!("{name}.dil"), channels, channels, 3, 1, dilation, dilation, rng),
            mix: Conv1d::new(store, &format!("{name}.mix"), channels, channels, 1, 1, 1, 0, rng),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.dilated.forward(g, x)?;
        let h = g.silu(h);
        let h = self.mix.forward(g, h)?;
        g.add(x, h)
    }
}

/// Same as [`ResidualDilated`] with transposed convolutions, for the
/// upsampling path.
#[derive(Debug, Clone, Copy)]
pub struct ResidualDilatedTranspose {
    pub dilated: ConvTranspose1d,
    pub mix: ConvTranspose1d,
}

impl ResidualDilatedTranspose {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, dilation: usize, rng: &mut Rng) -> Self {
        Self {
            dilated: ConvTranspose1d::new(store, &format!("{name}.dil"), channels, channels, 3, 1, dilation, dilation, rng),
            mix: ConvTranspose1d::new(store, &format!("{name}.mix"), channels, channels, 1, 1, 1, 0, rng),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.dilated.forward(g, x)?;
        let h = g.silu(h);
        let h = self.mix.forward(g, h)?;
        g.add(x, h)
    }
}

/// Dilations of the three residual layers in every down/up block.
pub const BLOCK_DILATIONS: [usize; 3] = [1, 3, 5];

/// Three residual dilated convolutions followed by a stride-2, kernel-4
/// downsampling convolution: `[C_in×L] → [C_out×L/2]`.
#[derive(Debug, Clone)]
pub struct DownBlock {
    pub residual: [ResidualDilated; 3],
    pub down: Conv1d,
}

impl DownBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let residual = BLOCK_DILATIONS.map(|d| ResidualDilated::new(store, &format!("{name}.res{d}"), cin, d, rng));
        let down = Conv1d::new(store, &format!("{name}.down"), cin, cout, 4, 2, 1, 1, rng);
        Self { residual, down }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, mut x: Var) -> Result<Var> {
        for r in &self.residual {
            x = r.forward(g, x)?;
        }
        self.down.forward(g, x)
    }
}

/// Mirror of [`DownBlock`]: three residual dilated transposed convolutions
/// then a stride-2, kernel-4 transposed convolution: `[C_in×L] → [C_out×2L]`.
#[derive(Debug, Clone)]
pub struct UpBlock {
    pub residual: [ResidualDilatedTranspose; 3],
    pub up: ConvTranspose1d,
}

impl UpBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let residual =
            BLOCK_DILATIONS.map(|d| ResidualDilatedTranspose::new(store, &format!("{name}.res{d}"), cin, d, rng));
        let up = ConvTranspose1d::new(store, &format!("{name}.up"), cin, cout, 4, 2, 1, 1, rng);
        Self { residual, up }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, mut x: Var) -> Result<Var> {
        for r in &self.residual {
            x = r.forward(g, x)?;
        }
        self.up.forward(g, x)
    }
}
