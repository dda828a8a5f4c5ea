//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! A [`Graph`] records every operation of one forward pass. Values are
//! computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! returns a [`Gradients`] table. Matrices are row-major `[rows × cols]`;
//! sequence features are channel-first `[channels × length]` for the
//! convolutions.

use alloc::vec::Vec;

use super::param::{ParamId, ParamStore};
use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Sigmoid,
    Tanh,
    Silu,
    Softplus,
    Exp,
    Log,
    Abs,
    Square,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    stride: usize,
    dilation: usize,
    padding: usize,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Unary(Var, Unary),
    SoftmaxRows(Var),
    LogSumExpRows { x: Var, exclude_diag: bool },
    Transpose(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    GatherRows { table: Var, idx: Vec<usize> },
    RepeatRows(Var),
    SumAll(Var),
    MeanAll(Var),
    MeanRows(Var),
    MeanCols(Var),
    Conv1d { x: Var, w: Var, geom: ConvGeom, cols: Vec<T> },
    ConvTranspose1d { x: Var, w: Var, geom: ConvGeom },
    L1Loss(Var, Var),
    MseLoss(Var, Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'a, T: Real = f32> {
    store: Option<&'a ParamStore<T>>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<Var>>,
}

/// Gradients of one scalar with respect to every node that required them.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.params.iter().filter_map(|&(id, v)| self.grads[v.0].as_deref().map(|g| (id, g)))
    }
}

fn softplus<T: Real>(x: T) -> T {
    // max(x, 0) + log(1 + e^{-|x|})
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn conv_out_len(len: usize, k: usize, g: ConvGeom) -> Option<usize> {
    let span = g.dilation * (k - 1) + 1;
    let padded = len + 2 * g.padding;
    if padded < span || g.stride == 0 {
        return None;
    }
    Some((padded - span) / g.stride + 1)
}

/// `cols[(c·k + j)·out_len + o] = x[c, o·stride + j·dilation − padding]`.
fn im2col<T: Real>(x: &[T], channels: usize, len: usize, k: usize, g: ConvGeom, out_len: usize) -> Vec<T> {
    let mut cols = alloc::vec![T::zero(); channels * k * out_len];
    for c in 0..channels {
        let src = &x[c * len..(c + 1) * len];
        for j in 0..k {
            let dst = &mut cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            let offset = (j * g.dilation) as isize - g.padding as isize;
            for (o, d) in dst.iter_mut().enumerate() {
                let p = (o * g.stride) as isize + offset;
                if p >= 0 && (p as usize) < len {
                    *d = src[p as usize];
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back onto `out` (accumulating).
fn col2im<T: Real>(cols: &[T], channels: usize, len: usize, k: usize, g: ConvGeom, out_len: usize, out: &mut [T]) {
    for c in 0..channels {
        let dst = &mut out[c * len..(c + 1) * len];
        for j in 0..k {
            let src = &cols[(c * k + j) * out_len..(c * k + j + 1) * out_len];
            let offset = (j * g.dilation) as isize - g.padding as isize;
            for (o, s) in src.iter().enumerate() {
                let p = (o * g.stride) as isize + offset;
                if p >= 0 && (p as usize) < len {
                    dst[p as usize] = dst[p as usize] + *s;
                }
            }
        }
    }
}

impl<'a, T: Real> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Graph<'a, T> {
    /// A graph without parameters (inputs only).
    pub fn new() -> Self {
        Self { store: None, nodes: Vec::new(), param_nodes: Vec::new() }
    }

    pub fn with_params(store: &'a ParamStore<T>) -> Self {
        Self { store: Some(store), nodes: Vec::new(), param_nodes: alloc::vec![None; store.len()] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param => true,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// An input whose gradient is reported by [`Gradients::wrt`].
    pub fn input_with_grad(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// The node of a stored parameter; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let store = self.store.expect("graph has no parameter store");
        let v = self.push(store.value(id).clone(), Op::Param, &[]);
        self.param_nodes[id.0] = Some(v);
        v
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(alloc::format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a)?;
        let (k2, n) = self.dims(b)?;
        if k != k2 {
            return Err(shape_err(alloc::format!("matmul [{m}×{k}]·[{k2}×{n}]")));
        }
        let mut out = alloc::vec![T::zero(); m * n];
        T::gemm(m, k, n, self.value(a).data(), (k as isize, 1), self.value(b).data(), (n as isize, 1), &mut out, false);
        let t = Tensor::new(&[m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T, what: &str) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(self.shape(a), data)?;
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y, "mul")
    }

    /// `a[r×c] + b[c]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if self.value(b).len() != c {
            return Err(shape_err(alloc::format!("add_row: [{r}×{c}] + {:?}", self.shape(b))));
        }
        let bv = self.value(b).data();
        let data = self.value(a).data().iter().enumerate().map(|(i, &x)| x + bv[i % c]).collect();
        let t = Tensor::new(self.shape(a), data)?;
        Ok(self.push(t, Op::AddRow(a, b), &[a, b]))
    }

    /// `a[r×c] + b[r]` broadcast over columns (per-channel bias).
    pub fn add_col(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if self.value(b).len() != r {
            return Err(shape_err(alloc::format!("add_col: [{r}×{c}] + {:?}", self.shape(b))));
        }
        let bv = self.value(b).data();
        let data = self.value(a).data().iter().enumerate().map(|(i, &x)| x + bv[i / c]).collect();
        let t = Tensor::new(self.shape(a), data)?;
        Ok(self.push(t, Op::AddCol(a, b), &[a, b]))
    }

    /// `a[r×c] ⊙ b[c]` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if self.value(b).len() != c {
            return Err(shape_err(alloc::format!("mul_row: [{r}×{c}] ⊙ {:?}", self.shape(b))));
        }
        let bv = self.value(b).data();
        let data = self.value(a).data().iter().enumerate().map(|(i, &x)| x * bv[i % c]).collect();
        let t = Tensor::new(self.shape(a), data)?;
        Ok(self.push(t, Op::MulRow(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let t = self.value(a).map(|x| x * s);
        self.push(t, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let t = self.value(a).map(|x| x + s);
        self.push(t, Op::AddScalar(a), &[a])
    }

    fn unary(&mut self, a: Var, u: Unary) -> Var {
        let t = self.value(a).map(|x| match u {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Silu => x * sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
        });
        self.push(t, Op::Unary(a, u), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Silu)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        let x = self.value(a).data();
        let mut out = alloc::vec![T::zero(); r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let m = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = (v - m).exp();
                sum = sum + *o;
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o = *o / sum;
            }
        }
        let t = Tensor::new(self.shape(a), out)?;
        Ok(self.push(t, Op::SoftmaxRows(a), &[a]))
    }

    /// Row-wise `log Σ_j exp(x_ij)` as an `[r × 1]` column. With
    /// `exclude_diag`, entry `j == i` is left out of row `i`.
    pub fn logsumexp_rows(&mut self, a: Var, exclude_diag: bool) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if exclude_diag && (c < 2 || r > c) {
            return Err(shape_err(alloc::format!("off-diagonal logsumexp on [{r}×{c}]")));
        }
        let x = self.value(a).data();
        let mut out = alloc::vec![T::zero(); r];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &x[i * c..(i + 1) * c];
            let keep = |j: usize| !(exclude_diag && j == i);
            let m = (0..c).filter(|&j| keep(j)).fold(T::neg_infinity(), |m, j| m.max(row[j]));
            let s: T = (0..c).filter(|&j| keep(j)).map(|j| (row[j] - m).exp()).sum();
            *o = m + s.ln();
        }
        let t = Tensor::new(&[r, 1], out)?;
        Ok(self.push(t, Op::LogSumExpRows { x: a, exclude_diag }, &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose()?;
        Ok(self.push(t, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(a), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.dims(parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.dims(p)?;
            if pr != r {
                return Err(shape_err(alloc::format!("concat_cols: {pr} rows vs {r}")));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let t = Tensor::new(&[r, total], out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.dims(parts[0])?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p)?;
            if pc != c {
                return Err(shape_err(alloc::format!("concat_rows: {pc} cols vs {c}")));
            }
            rows += pr;
            out.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::new(&[rows, c], out)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if start + len > c {
            return Err(shape_err(alloc::format!("slice_cols {start}+{len} of {c}")));
        }
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&x[i * c + start..i * c + start + len]);
        }
        let t = Tensor::new(&[r, len], out)?;
        Ok(self.push(t, Op::SliceCols { x: a, start }, &[a]))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if start + len > r {
            return Err(shape_err(alloc::format!("slice_rows {start}+{len} of {r}")));
        }
        let out = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let t = Tensor::new(&[len, c], out)?;
        Ok(self.push(t, Op::SliceRows { x: a, start }, &[a]))
    }

    /// Rows `idx` of `table[K×d]` as an `[idx.len() × d]` matrix.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let (k, d) = self.dims(table)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= k) {
            return Err(shape_err(alloc::format!("gather row {bad} of {k}")));
        }
        let x = self.value(table).data();
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            out.extend_from_slice(&x[i * d..(i + 1) * d]);
        }
        let t = Tensor::new(&[idx.len(), d], out)?;
        Ok(self.push(t, Op::GatherRows { table, idx: idx.to_vec() }, &[table]))
    }

    /// Tiles a single row `n` times.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if r != 1 {
            return Err(shape_err(alloc::format!("repeat_rows needs one row, got {r}")));
        }
        let row = self.value(a).data();
        let mut out = Vec::with_capacity(n * c);
        for _ in 0..n {
            out.extend_from_slice(row);
        }
        let t = Tensor::new(&[n, c], out)?;
        Ok(self.push(t, Op::RepeatRows(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s: T = x.data().iter().copied().sum();
        let m = s / T::from_f64(x.len() as f64);
        self.push(Tensor::scalar(m), Op::MeanAll(a), &[a])
    }

    /// Mean over rows: `[r×c] → [1×c]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        let x = self.value(a).data();
        let inv = T::one() / T::from_f64(r as f64);
        let out = (0..c).map(|j| (0..r).map(|i| x[i * c + j]).sum::<T>() * inv).collect();
        let t = Tensor::new(&[1, c], out)?;
        Ok(self.push(t, Op::MeanRows(a), &[a]))
    }

    /// Mean over columns: `[r×c] → [r×1]` (time pooling of channel-first features).
    pub fn mean_cols(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        let x = self.value(a).data();
        let inv = T::one() / T::from_f64(c as f64);
        let out = (0..r).map(|i| x[i * c..(i + 1) * c].iter().copied().sum::<T>() * inv).collect();
        let t = Tensor::new(&[r, 1], out)?;
        Ok(self.push(t, Op::MeanCols(a), &[a]))
    }

    /// Cross-correlation of `x[C_in×L]` with `w[C_out×C_in×k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, dilation: usize, padding: usize) -> Result<Var> {
        let (cin, len) = self.dims(x)?;
        let &[cout, wcin, k] = self.shape(w) else {
            return Err(shape_err(alloc::format!("conv1d weight shape {:?}", self.shape(w))));
        };
        if wcin != cin || k == 0 || dilation == 0 {
            return Err(shape_err(alloc::format!("conv1d: input channels {cin}, weight {:?}", self.shape(w))));
        }
        let geom = ConvGeom { stride, dilation, padding };
        let out_len = conv_out_len(len, k, geom)
            .ok_or_else(|| shape_err(alloc::format!("conv1d: no output for length {len}, k {k}")))?;
        let cols = im2col(self.value(x).data(), cin, len, k, geom, out_len);
        let mut out = alloc::vec![T::zero(); cout * out_len];
        let ck = cin * k;
        T::gemm(cout, ck, out_len, self.value(w).data(), (ck as isize, 1), &cols, (out_len as isize, 1), &mut out, false);
        let t = Tensor::new(&[cout, out_len], out)?;
        Ok(self.push(t, Op::Conv1d { x, w, geom, cols }, &[x, w]))
    }

    /// Transposed convolution of `x[C_in×L]` with `w[C_in×C_out×k]`: the
    /// adjoint of [`Graph::conv1d`] with the same weight and geometry.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, stride: usize, dilation: usize, padding: usize) -> Result<Var> {
        let (cin, len) = self.dims(x)?;
        let &[wcin, cout, k] = self.shape(w) else {
            return Err(shape_err(alloc::format!("conv_transpose1d weight shape {:?}", self.shape(w))));
        };
        if wcin != cin || k == 0 || dilation == 0 || stride == 0 || len == 0 {
            return Err(shape_err(alloc::format!("conv_transpose1d: input {:?}, weight {:?}", self.shape(x), self.shape(w))));
        }
        let full = (len - 1) * stride + dilation * (k - 1) + 1;
        if full <= 2 * padding {
            return Err(shape_err(alloc::format!("conv_transpose1d: padding {padding} crops everything")));
        }
        let out_len = full - 2 * padding;
        let geom = ConvGeom { stride, dilation, padding };
        let ck = cout * k;
        // cols = wᵀ·x : [C_out·k × L]
        let mut cols = alloc::vec![T::zero(); ck * len];
        T::gemm(ck, cin, len, self.value(w).data(), (1, ck as isize), self.value(x).data(), (len as isize, 1), &mut cols, false);
        let mut out = alloc::vec![T::zero(); cout * out_len];
        col2im(&cols, cout, out_len, k, geom, len, &mut out);
        let t = Tensor::new(&[cout, out_len], out)?;
        Ok(self.push(t, Op::ConvTranspose1d { x, w, geom }, &[x, w]))
    }

    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "l1_loss")?;
        let n = T::from_f64(self.value(a).len() as f64);
        let s: T = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| (x - y).abs()).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::L1Loss(a, b), &[a, b]))
    }

    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mse_loss")?;
        let n = T::from_f64(self.value(a).len() as f64);
        let s: T = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::MseLoss(a, b), &[a, b]))
    }

    /// Mean softmax cross-entropy of `logits[r×K]` against one label per row.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (r, k) = self.dims(logits)?;
        if labels.len() != r || labels.iter().any(|&l| l >= k) {
            return Err(shape_err(alloc::format!("cross_entropy: {} labels for [{r}×{k}]", labels.len())));
        }
        let x = self.value(logits).data();
        let mut probs = alloc::vec![T::zero(); r * k];
        let mut loss = T::zero();
        for i in 0..r {
            let row = &x[i * k..(i + 1) * k];
            let m = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let s: T = row.iter().map(|&v| (v - m).exp()).sum();
            let lse = m + s.ln();
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
            loss = loss + lse - row[labels[i]];
        }
        let loss = loss / T::from_f64(r as f64);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, &[logits]))
    }

    /// Gradients of the single-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(shape_err(alloc::format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<T>>> = alloc::vec![None; self.nodes.len()];
        grads[loss.0] = Some(alloc::vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        let params = self
            .param_nodes
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| alloc::vec![T::zero(); n]))
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl Fn(usize) -> T) {
        if let Some(buf) = self.grad_buf(grads, v) {
            for (i, d) in buf.iter_mut().enumerate() {
                *d = *d + f(i);
            }
        }
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2().expect("matrix");
                let n = self.nodes[b.0].value.dims2().expect("matrix").1;
                if let Some(da) = self.grad_buf(grads, a) {
                    // dA += dC·Bᵀ
                    T::gemm(m, n, k, g, (n as isize, 1), val(b), (1, n as isize), da, true);
                }
                if let Some(db) = self.grad_buf(grads, b) {
                    // dB += Aᵀ·dC
                    T::gemm(k, m, n, val(a), (1, k as isize), g, (n as isize, 1), db, true);
                }
            }
            &Op::Add(a, b) => {
                self.acc(grads, a, |i| g[i]);
                self.acc(grads, b, |i| g[i]);
            }
            &Op::Sub(a, b) => {
                self.acc(grads, a, |i| g[i]);
                self.acc(grads, b, |i| -g[i]);
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                self.acc(grads, a, |i| g[i] * bv[i]);
                self.acc(grads, b, |i| g[i] * av[i]);
            }
            &Op::AddRow(a, b) => {
                let c = val(b).len();
                self.acc(grads, a, |i| g[i]);
                self.acc(grads, b, |j| g.iter().skip(j).step_by(c).copied().sum());
            }
            &Op::AddCol(a, b) => {
                let c = g.len() / val(b).len();
                self.acc(grads, a, |i| g[i]);
                self.acc(grads, b, |r| g[r * c..(r + 1) * c].iter().copied().sum());
            }
            &Op::MulRow(a, b) => {
                let (av, bv) = (val(a), val(b));
                let c = bv.len();
                self.acc(grads, a, |i| g[i] * bv[i % c]);
                self.acc(grads, b, |j| (j..g.len()).step_by(c).map(|i| g[i] * av[i]).sum());
            }
            &Op::Scale(a, s) => self.acc(grads, a, |i| g[i] * s),
            &Op::AddScalar(a) => self.acc(grads, a, |i| g[i]),
            &Op::Unary(a, u) => {
                let x = val(a);
                let y = node.value.data();
                let one = T::one();
                self.acc(grads, a, |i| {
                    g[i] * match u {
                        Unary::Sigmoid => y[i] * (one - y[i]),
                        Unary::Tanh => one - y[i] * y[i],
                        Unary::Silu => {
                            let s = sigmoid(x[i]);
                            s * (one + x[i] * (one - s))
                        }
                        Unary::Softplus => sigmoid(x[i]),
                        Unary::Exp => y[i],
                        Unary::Log => one / x[i],
                        Unary::Abs => {
                            if x[i] > T::zero() {
                                one
                            } else if x[i] < T::zero() {
                                -one
                            } else {
                                T::zero()
                            }
                        }
                        Unary::Square => (one + one) * x[i],
                    }
                });
            }
            &Op::SoftmaxRows(a) => {
                let y = node.value.data();
                let c = node.value.dims2().expect("matrix").1;
                let dots: Vec<T> = (0..y.len() / c)
                    .map(|r| (r * c..(r + 1) * c).map(|i| g[i] * y[i]).sum())
                    .collect();
                self.acc(grads, a, |i| y[i] * (g[i] - dots[i / c]));
            }
            &Op::LogSumExpRows { x, exclude_diag } => {
                let xv = val(x);
                let c = self.nodes[x.0].value.dims2().expect("matrix").1;
                let lse = node.value.data();
                self.acc(grads, x, |idx| {
                    let (r, j) = (idx / c, idx % c);
                    if exclude_diag && r == j {
                        T::zero()
                    } else {
                        g[r] * (xv[idx] - lse[r]).exp()
                    }
                });
            }
            &Op::Transpose(a) => {
                let (r, c) = self.nodes[a.0].value.dims2().expect("matrix");
                // out is [c×r]; out[j][i] = a[i][j]
                self.acc(grads, a, |idx| g[(idx % c) * r + idx / c]);
            }
            &Op::Reshape(a) => self.acc(grads, a, |i| g[i]),
            Op::ConcatCols(parts) => {
                let total = node.value.dims2().expect("matrix").1;
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.dims2().expect("matrix").1;
                    self.acc(grads, p, |idx| g[(idx / w) * total + offset + idx % w]);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    self.acc(grads, p, |i| g[offset + i]);
                    offset += n;
                }
            }
            &Op::SliceCols { x, start } => {
                let c = self.nodes[x.0].value.dims2().expect("matrix").1;
                let len = node.value.dims2().expect("matrix").1;
                if let Some(buf) = self.grad_buf(grads, x) {
                    for (r, row) in g.chunks(len).enumerate() {
                        for (d, s) in buf[r * c + start..r * c + start + len].iter_mut().zip(row) {
                            *d = *d + *s;
                        }
                    }
                }
            }
            &Op::SliceRows { x, start } => {
                let c = node.value.dims2().expect("matrix").1;
                if let Some(buf) = self.grad_buf(grads, x) {
                    for (d, s) in buf[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *d = *d + *s;
                    }
                }
            }
            Op::GatherRows { table, idx } => {
                let d = node.value.dims2().expect("matrix").1;
                if let Some(buf) = self.grad_buf(grads, *table) {
                    for (r, &i) in idx.iter().enumerate() {
                        for (dst, s) in buf[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *dst = *dst + *s;
                        }
                    }
                }
            }
            &Op::RepeatRows(a) => {
                let c = self.nodes[a.0].value.len();
                self.acc(grads, a, |j| g.iter().skip(j).step_by(c).copied().sum());
            }
            &Op::SumAll(a) => self.acc(grads, a, |_| g[0]),
            &Op::MeanAll(a) => {
                let n = T::from_f64(self.nodes[a.0].value.len() as f64);
                self.acc(grads, a, |_| g[0] / n);
            }
            &Op::MeanRows(a) => {
                let (r, c) = self.nodes[a.0].value.dims2().expect("matrix");
                let inv = T::one() / T::from_f64(r as f64);
                self.acc(grads, a, |i| g[i % c] * inv);
            }
            &Op::MeanCols(a) => {
                let c = self.nodes[a.0].value.dims2().expect("matrix").1;
                let inv = T::one() / T::from_f64(c as f64);
                self.acc(grads, a, |i| g[i / c] * inv);
            }
            Op::Conv1d { x, w, geom, cols } => {
                let (cin, len) = self.nodes[x.0].value.dims2().expect("matrix");
                let &[cout, _, k] = self.nodes[w.0].value.shape() else { unreachable!() };
                let out_len = g.len() / cout;
                let ck = cin * k;
                if let Some(dw) = self.grad_buf(grads, *w) {
                    // dW += dY·colsᵀ
                    T::gemm(cout, out_len, ck, g, (out_len as isize, 1), cols, (1, out_len as isize), dw, true);
                }
                if self.nodes[x.0].needs_grad {
                    // dcols = Wᵀ·dY
                    let mut dcols = alloc::vec![T::zero(); ck * out_len];
                    T::gemm(ck, cout, out_len, val(*w), (1, ck as isize), g, (out_len as isize, 1), &mut dcols, false);
                    let dx = self.grad_buf(grads, *x).expect("needs grad");
                    col2im(&dcols, cin, len, k, *geom, out_len, dx);
                }
            }
            Op::ConvTranspose1d { x, w, geom } => {
                let (cin, len) = self.nodes[x.0].value.dims2().expect("matrix");
                let &[_, cout, k] = self.nodes[w.0].value.shape() else { unreachable!() };
                let out_len = g.len() / cout;
                let ck = cout * k;
                let gcols = im2col(g, cout, out_len, k, *geom, len);
                if let Some(dx) = self.grad_buf(grads, *x) {
                    // dX += W·gcols
                    T::gemm(cin, ck, len, val(*w), (ck as isize, 1), &gcols, (len as isize, 1), dx, true);
                }
                if let Some(dw) = self.grad_buf(grads, *w) {
                    // dW += X·gcolsᵀ
                    T::gemm(cin, len, ck, val(*x), (len as isize, 1), &gcols, (1, len as isize), dw, true);
                }
            }
            &Op::L1Loss(a, b) => {
                let (av, bv) = (val(a), val(b));
                let n = T::from_f64(av.len() as f64);
                let sign = |i: usize| {
                    let d = av[i] - bv[i];
                    if d > T::zero() {
                        T::one()
                    } else if d < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                };
                self.acc(grads, a, |i| g[0] * sign(i) / n);
                self.acc(grads, b, |i| -g[0] * sign(i) / n);
            }
            &Op::MseLoss(a, b) => {
                let (av, bv) = (val(a), val(b));
                let two = T::from_f64(2.0) / T::from_f64(av.len() as f64);
                self.acc(grads, a, |i| g[0] * two * (av[i] - bv[i]));
                self.acc(grads, b, |i| -g[0] * two * (av[i] - bv[i]));
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = probs.len() / labels.len();
                let inv = g[0] / T::from_f64(labels.len() as f64);
                self.acc(grads, *logits, |i| {
                    let hot = if labels[i / k] == i % k { T::one() } else { T::zero() };
                    (probs[i] - hot) * inv
                });
            }
        }
    }
}
