//! Multi-scale calligraphy style encoder and its contrastive objective.
//!
//! The encoder maps a channel-first trajectory `[3 × L]` to three feature
//! sequences at strides 2, 4 and 8. For each writer in a batch two disjoint
//! windows of one feature sequence are mean-pooled and projected; the loss
//! pulls a writer's two windows together and pushes them away from the other
//! writers' positives.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{shape_err, Error, Result};
use crate::nn::layers::{Conv1d, DownBlock, Linear};
use crate::nn::{Graph, ParamStore, Real, Tensor, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StyleConfig {
    /// Stem output, then the outputs of f¹, f², f³.
    pub channels: [usize; 4],
    pub proj_dim: usize,
}

impl StyleConfig {
    pub fn paper() -> Self {
        Self { channels: [128, 256, 512, 1024], proj_dim: 128 }
    }

    /// Every channel count divided by 8.
    pub fn toy() -> Self {
        Self { channels: [16, 32, 64, 128], proj_dim: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub segment_len: usize,
    pub lambdas: [f64; 3],
    /// Scale projected segments to unit length before the inner product.
    /// Without it the loss has no lower bound and training diverges.
    pub normalize: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { tau: 0.1, segment_len: 4, lambdas: [0.01, 0.1, 0.1], normalize: true }
    }
}

/// Stem, three downsampling blocks and the three contrastive projections.
#[derive(Debug, Clone)]
pub struct StyleEncoder {
    pub config: StyleConfig,
    pub stem: Conv1d,
    pub blocks: [DownBlock; 3],
    pub proj: [Linear; 3],
}

/// Feature sequences `[L/2 × C₁]`, `[L/4 × C₂]`, `[L/8 × C₃]` (time by channel).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleFeatures {
    pub f1: Tensor,
    pub f2: Tensor,
    pub f3: Tensor,
}

impl MultiScaleFeatures {
    /// Mean over time of f³.
    pub fn pooled_f3(&self) -> Vec<f32> {
        let (l, c) = self.f3.dims2().expect("matrix");
        (0..c).map(|j| (0..l).map(|t| self.f3.data()[t * c + j]).sum::<f32>() / l as f32).collect()
    }
}

impl StyleEncoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, prefix: &str, config: StyleConfig, rng: &mut Rng) -> Self {
        let c = config.channels;
        let stem = Conv1d::new(store, &format!("{prefix}.stem"), 3, c[0], 1, 1, 1, 0, rng);
        let blocks = [0, 1, 2].map(|i| DownBlock::new(store, &format!("{prefix}.f{}", i + 1), c[i], c[i + 1], rng));
        let proj = [0, 1, 2].map(|i| Linear::new(store, &format!("{prefix}.g{}", i + 1), c[i + 1], config.proj_dim, rng));
        Self { config, stem, blocks, proj }
    }

    /// `x[3 × L]` with `L` a positive multiple of 8 → channel-first f¹, f², f³.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<[Var; 3]> {
        let (c, l) = g.value(x).dims2()?;
        if c != 3 || l == 0 || l % 8 != 0 {
            return Err(shape_err(format!("style encoder input {:?}: need [3 × 8k]", g.shape(x))));
        }
        let h = self.stem.forward(g, x)?;
        let f1 = self.blocks[0].forward(g, h)?;
        let f2 = self.blocks[1].forward(g, f1)?;
        let f3 = self.blocks[2].forward(g, f2)?;
        Ok([f1, f2, f3])
    }

    /// Inference-only encoding of a `[L × 3]` trajectory.
    pub fn encode(&self, store: &ParamStore, reference: &Tensor) -> Result<MultiScaleFeatures> {
        let mut g = Graph::with_params(store);
        let x = g.input(reference.transpose()?);
        let f = self.forward(&mut g, x)?;
        let t = |g: &Graph<'_, f32>, v: Var| g.value(v).transpose();
        Ok(MultiScaleFeatures { f1: t(&g, f[0])?, f2: t(&g, f[1])?, f3: t(&g, f[2])? })
    }
}

/// Two disjoint windows of length `l` in a sequence of length `len`, drawn
/// uniformly over ordered disjoint pairs.
pub fn sample_segments(len: usize, l: usize, rng: &mut Rng) -> Result<(Range<usize>, Range<usize>)> {
    if l == 0 || len < 2 * l {
        return Err(Error::SequenceTooShort { len, segment: l });
    }
    let starts = len - l + 1;
    loop {
        let (a, b) = (rng.below(starts), rng.below(starts));
        if a + l <= b || b + l <= a {
            return Ok((a..a + l, b..b + l));
        }
    }
}

/// Segment length actually used on a sequence of length `len`.
pub fn effective_segment_len(len: usize, l: usize) -> usize {
    if len >= 2 * l {
        l
    } else {
        len / 2
    }
}

/// Contrastive loss at one scale: `e, e_plus[b × d]` hold each writer's projected anchor
/// and positive. Row `k`'s denominator runs over the other writers' positives.
pub fn contrastive_loss_scale<T: Real>(g: &mut Graph<'_, T>, e: Var, e_plus: Var, tau: f64) -> Result<Var> {
    let (b, d) = g.value(e).dims2()?;
    if g.value(e_plus).dims2()? != (b, d) {
        return Err(shape_err(format!("anchors {:?} vs positives {:?}", g.shape(e), g.shape(e_plus))));
    }
    if b < 2 {
        return Err(Error::NeedTwoWriters(b));
    }
    if tau <= 0.0 {
        return Err(Error::InvalidValue(format!("temperature {tau}")));
    }
    let pt = g.transpose(e_plus)?;
    let sim = g.matmul(e, pt)?;
    let sim = g.scale(sim, T::from_f64(1.0 / tau));
    let mut eye = alloc::vec![T::zero(); b * b];
    for k in 0..b {
        eye[k * b + k] = T::one();
    }
    let eye = g.input(Tensor::new(&[b, b], eye)?);
    let diag = g.mul(sim, eye)?;
    let diag = g.sum(diag);
    let lse = g.logsumexp_rows(sim, true)?;
    let lse = g.sum(lse);
    let total = g.sub(lse, diag)?;
    Ok(g.scale(total, T::from_f64(1.0 / b as f64)))
}

/// Windows chosen for every writer at every scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentChoice {
    pub per_scale: [Vec<(Range<usize>, Range<usize>)>; 3],
}

/// Draws one window pair per writer and scale from channel-first features.
pub fn choose_segments<T: Real>(
    g: &Graph<'_, T>,
    features: &[[Var; 3]],
    segment_len: usize,
    rng: &mut Rng,
) -> Result<SegmentChoice> {
    let mut per_scale: [Vec<_>; 3] = Default::default();
    for f in features {
        for (s, choice) in per_scale.iter_mut().enumerate() {
            let len = g.value(f[s]).dims2()?.1;
            choice.push(sample_segments(len, effective_segment_len(len, segment_len), rng)?);
        }
    }
    Ok(SegmentChoice { per_scale })
}

fn pooled_rows<T: Real>(g: &mut Graph<'_, T>, features: &[Var], ranges: &[Range<usize>]) -> Result<Var> {
    let mut rows = Vec::with_capacity(features.len());
    for (&f, r) in features.iter().zip(ranges) {
        let w = g.slice_cols(f, r.start, r.len())?;
        let m = g.mean_cols(w)?;
        rows.push(g.transpose(m)?);
    }
    g.concat_rows(&rows)
}

/// `Σ_s λ_s ℓ_s` over the three scales; scales with `λ_s = 0` are skipped.
pub fn multi_scale_contrastive_loss<T: Real>(
    g: &mut Graph<'_, T>,
    encoder: &StyleEncoder,
    features: &[[Var; 3]],
    segments: &SegmentChoice,
    config: &ContrastiveConfig,
) -> Result<Var> {
    if features.len() < 2 {
        return Err(Error::NeedTwoWriters(features.len()));
    }
    let mut total: Option<Var> = None;
    for s in 0..3 {
        if config.lambdas[s] == 0.0 {
            continue;
        }
        let scale: Vec<Var> = features.iter().map(|f| f[s]).collect();
        let (a, p): (Vec<_>, Vec<_>) = segments.per_scale[s].iter().cloned().unzip();
        let anchors = pooled_rows(g, &scale, &a)?;
        let positives = pooled_rows(g, &scale, &p)?;
        let mut za = encoder.proj[s].forward(g, anchors)?;
        let mut zp = encoder.proj[s].forward(g, positives)?;
        if config.normalize {
            za = unit_rows(g, za)?;
            zp = unit_rows(g, zp)?;
        }
        let l = contrastive_loss_scale(g, za, zp, config.tau)?;
        let l = g.scale(l, T::from_f64(config.lambdas[s]));
        total = Some(match total {
            Some(t) => g.add(t, l)?,
            None => l,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => Ok(g.input(Tensor::scalar(T::zero()))),
    }
}

/// Each row divided by its Euclidean norm.
pub fn unit_rows<T: Real>(g: &mut Graph<'_, T>, z: Var) -> Result<Var> {
    let (_, d) = g.value(z).dims2()?;
    let sq = g.square(z);
    let m = g.mean_cols(sq)?;
    let m = g.add_scalar(m, T::from_f64(1e-12));
    let ln = g.ln(m);
    let ln = g.scale(ln, T::from_f64(-0.5));
    let inv = g.exp(ln);
    let zt = g.transpose(z)?;
    let zt = g.mul_row(zt, inv)?;
    let z = g.transpose(zt)?;
    Ok(g.scale(z, T::from_f64(1.0 / libm::sqrt(d as f64))))
}

/// Cosine similarity of two vectors; zero when either vanishes.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64) * (*x as f64)).sum();
    let nb: f64 = b.iter().map(|x| (*x as f64) * (*x as f64)).sum();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / libm::sqrt(na * nb)
    }
}

/// Mean intra-writer minus mean inter-writer cosine similarity over all
/// pairs of distinct items.
pub fn clustering_margin(vectors: &[Vec<f32>], labels: &[usize]) -> f64 {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let c = cosine(&vectors[i], &vectors[j]);
            if labels[i] == labels[j] {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    intra / ni.max(1) as f64 - inter / nx.max(1) as f64
}
