use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::{ancestral_sample, gaussian, linear_schedule, q_sample, time_embedding, NoiseSchedule, UNetDenoiser};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Adam, AdamConfig, Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::rng::Rng;
use crate::style::{choose_segments, multi_scale_contrastive_loss, ContrastiveConfig, MultiScaleFeatures, StyleConfig, StyleEncoder};
use crate::traj::{binarize_pen_state, Glyph, PenPoint, DEFAULT_MAX_POINTS};

pub const TIME_DIM: usize = 32;
pub const CHAR_DIM: usize = 150;
/// Trajectory, time embedding and character embedding side by side.
pub const INPUT_DIM: usize = 3 + TIME_DIM + CHAR_DIM;
/// Trailing pen-up rows moving less than this are treated as padding.
const PAD_MOVEMENT: f64 = 0.05;
const MIN_REFERENCE_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionConfig {
    pub categories: usize,
    pub style: StyleConfig,
    pub unet_channels: [usize; 4],
    pub steps: usize,
    pub alpha_first: f64,
    pub alpha_last: f64,
    pub n_max: usize,
}

impl DiffusionConfig {
    pub fn paper(categories: usize) -> Self {
        Self {
            categories,
            style: StyleConfig::paper(),
            unet_channels: [128, 256, 512, 1024],
            steps: 1000,
            alpha_first: 1.0 - 1e-4,
            alpha_last: 1.0 - 2e-2,
            n_max: DEFAULT_MAX_POINTS,
        }
    }

    /// Channels divided by 8 and T = 200. The noise increments 1 − α are
    /// scaled by 1000/T so that ᾱ_T stays close to zero.
    pub fn toy(categories: usize) -> Self {
        Self {
            style: StyleConfig::toy(),
            unet_channels: [16, 32, 64, 128],
            steps: 200,
            alpha_first: 1.0 - 5e-4,
            alpha_last: 1.0 - 1e-1,
            ..Self::paper(categories)
        }
    }

    /// Length the denoiser sees: `n_max` rounded up to a multiple of 8.
    pub fn padded_len(&self) -> usize {
        self.n_max.div_ceil(8) * 8
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        linear_schedule(self.steps, self.alpha_first, self.alpha_last)
    }
}

/// Per-channel standardization of `(dh, dv, s)`. The pen channel is left
/// untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for TrajStats {
    fn default() -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3] }
    }
}

impl TrajStats {
    pub fn fit(glyphs: &[Glyph]) -> Result<Self> {
        let pts: Vec<&PenPoint> = glyphs.iter().flat_map(|g| &g.points).collect();
        if pts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = pts.len() as f64;
        let mut out = Self::default();
        for (j, f) in [|p: &PenPoint| p.dh, |p: &PenPoint| p.dv].iter().enumerate() {
            let m = pts.iter().map(|p| f(p)).sum::<f64>() / n;
            let v = pts.iter().map(|p| (f(p) - m) * (f(p) - m)).sum::<f64>() / n;
            out.mean[j] = m;
            out.std[j] = if v > 1e-12 { libm::sqrt(v) } else { 1.0 };
        }
        Ok(out)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.mean[0], self.mean[1], self.mean[2], self.std[0], self.std[1], self.std[2]]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { mean: [a[0], a[1], a[2]], std: [a[3], a[4], a[5]] }
    }

    /// `[len × 3]`, padded with [`PenPoint::PAD`] or truncated.
    pub fn tensor(&self, points: &[PenPoint], len: usize) -> Tensor {
        let mut data = Vec::with_capacity(len * 3);
        for p in points.iter().copied().chain(core::iter::repeat(PenPoint::PAD)).take(len) {
            for (j, v) in [p.dh, p.dv, p.s].into_iter().enumerate() {
                data.push(((v - self.mean[j]) / self.std[j]) as f32);
            }
        }
        Tensor::new(&[len, 3], data).expect("row count")
    }

    pub fn unstandardize(&self, row: &[f32]) -> [f64; 3] {
        core::array::from_fn(|j| row[j] as f64 * self.std[j] + self.mean[j])
    }
}

/// Parameter handles of the style encoder, character table and denoiser.
#[derive(Debug, Clone)]
pub struct FontNet {
    pub style: StyleEncoder,
    pub embed: ParamId,
    pub unet: UNetDenoiser,
}

impl FontNet {
    pub fn new<T: Real>(store: &mut ParamStore<T>, config: &DiffusionConfig, rng: &mut Rng) -> Self {
        let style = StyleEncoder::new(store, "style", config.style, rng);
        let embed = store.add_uniform("font.embed", &[config.categories, CHAR_DIM], 1.0, rng);
        let unet = UNetDenoiser::new(store, "font.unet", INPUT_DIM, config.unet_channels, config.style.channels, rng);
        Self { style, embed, unet }
    }

    /// Channel-first `[185 × n]` denoiser input.
    pub fn input<T: Real>(&self, g: &mut Graph<'_, T>, x_t: &Tensor<T>, t: usize, category: usize) -> Result<Var> {
        let (n, c) = x_t.dims2()?;
        if c != 3 {
            return Err(shape_err(format!("trajectory {:?}", x_t.shape())));
        }
        let table = g.param(self.embed);
        let k = g.shape(table)[0];
        if category >= k {
            return Err(Error::UnknownCategory { category, count: k });
        }
        let xv = g.input(x_t.clone());
        let te = time_embedding(t, TIME_DIM);
        let te = g.input(Tensor::from_f64(&[1, TIME_DIM], &te)?);
        let te = g.repeat_rows(te, n)?;
        let e = g.gather_rows(table, &alloc::vec![category; n])?;
        let x = g.concat_cols(&[xv, te, e])?;
        g.transpose(x)
    }

    /// Predicted noise `[n × 3]` for a standardized noisy trajectory.
    pub fn predict<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        x_t: &Tensor<T>,
        t: usize,
        category: usize,
        style: &[Var; 3],
    ) -> Result<Var> {
        let x = self.input(g, x_t, t, category)?;
        let out = self.unet.forward(g, x, style)?;
        g.transpose(out)
    }
}

/// Mean squared error between `eps` and the prediction at `x_t = q(x0, t, eps)`,
/// conditioned on the encoded reference. Also returns the style features.
#[allow(clippy::too_many_arguments)]
pub fn denoising_loss<T: Real>(
    g: &mut Graph<'_, T>,
    net: &FontNet,
    x0: &Tensor<T>,
    reference: &Tensor<T>,
    category: usize,
    t: usize,
    eps: &Tensor<T>,
    schedule: &NoiseSchedule,
) -> Result<(Var, [Var; 3])> {
    let x_t = q_sample(x0, t, eps, schedule)?;
    let r = g.input(reference.transpose()?);
    let style = net.style.forward(g, r)?;
    let pred = net.predict(g, &x_t, t, category, &style)?;
    let target = g.input(eps.clone());
    Ok((g.mse_loss(pred, target)?, style))
}

#[derive(Debug, Clone)]
pub struct FontModel {
    pub config: DiffusionConfig,
    pub store: ParamStore,
    pub net: FontNet,
    pub schedule: NoiseSchedule,
    pub stats: TrajStats,
}

impl FontModel {
    pub fn new(config: DiffusionConfig, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let net = FontNet::new(&mut store, &config, &mut rng);
        Ok(Self { config, store, net, schedule: config.schedule()?, stats: TrajStats::default() })
    }

    /// Standardized glyph padded to the denoiser length.
    pub fn glyph_tensor(&self, glyph: &Glyph) -> Tensor {
        self.stats.tensor(&glyph.points, self.config.padded_len())
    }

    /// Reference glyphs joined end to end, standardized and padded to a
    /// multiple of 8 (at least 16 rows).
    pub fn reference_tensor(&self, glyphs: &[Glyph]) -> Tensor {
        let pts: Vec<PenPoint> = glyphs.iter().flat_map(|g| g.points.iter().copied()).collect();
        let len = pts.len().div_ceil(8).max(MIN_REFERENCE_ROWS / 8) * 8;
        self.stats.tensor(&pts, len)
    }

    pub fn encode_style(&self, reference: &[Glyph]) -> Result<MultiScaleFeatures> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        self.net.style.encode(&self.store, &self.reference_tensor(reference))
    }

    /// Rows `[x_t | emb_t | E[k]]`, `[n × 185]`.
    pub fn assemble_input(&self, x_t: &Tensor, t: usize, category: usize) -> Result<Tensor> {
        let mut g = Graph::with_params(&self.store);
        let x = self.net.input(&mut g, x_t, t, category)?;
        g.value(x).transpose()
    }

    /// `εθ(x_in, f_style)` for `x_in[n × 185]`.
    pub fn predict_noise(&self, x_in: &Tensor, style: &MultiScaleFeatures) -> Result<Tensor> {
        let mut g = Graph::with_params(&self.store);
        let x = g.input(x_in.transpose()?);
        let f = [&style.f1, &style.f2, &style.f3].map(|f| f.transpose().map(|t| g.input(t)));
        let f = [f[0].clone()?, f[1].clone()?, f[2].clone()?];
        let out = self.net.unet.forward(&mut g, x, &f)?;
        g.value(out).transpose()
    }

    fn predict_from_features(&self, x_t: &Tensor, t: usize, category: usize, style: &MultiScaleFeatures) -> Result<Tensor> {
        let mut g = Graph::with_params(&self.store);
        let f = [&style.f1, &style.f2, &style.f3].map(|f| f.transpose().map(|t| g.input(t)));
        let f = [f[0].clone()?, f[1].clone()?, f[2].clone()?];
        let out = self.net.predict(&mut g, x_t, t, category, &f)?;
        Ok(g.value(out).clone())
    }

    /// One draw of the reconstruction loss: `t ~ U{1..T}`, `ε ~ N(0, I)`.
    pub fn reconstruction_loss(&self, x0: &Tensor, reference: &Tensor, category: usize, rng: &mut Rng) -> Result<f64> {
        let t = 1 + rng.below(self.schedule.steps);
        let eps = gaussian(x0.shape(), rng);
        let mut g = Graph::with_params(&self.store);
        let (loss, _) = denoising_loss(&mut g, &self.net, x0, reference, category, t, &eps, &self.schedule)?;
        Ok(g.value(loss).item() as f64)
    }

    /// Standardized `x₀` from the full reverse chain.
    pub fn sample(&self, category: usize, style: &MultiScaleFeatures, seed: u64) -> Result<Tensor> {
        let mut rng = Rng::derive(seed, category as u64);
        let x_t = gaussian(&[self.config.padded_len(), 3], &mut rng);
        ancestral_sample(&self.schedule, x_t, Some(&mut rng), |x, t| self.predict_from_features(x, t, category, style))
    }

    /// Undoes standardization, binarizes pen states and strips trailing
    /// hovering rows.
    pub fn decode(&self, x0: &Tensor, category: usize) -> Result<Glyph> {
        let mut points = Vec::with_capacity(x0.dims2()?.0);
        for row in x0.data().chunks(3) {
            let [dh, dv, s] = self.stats.unstandardize(row);
            points.push(PenPoint::new(dh, dv, binarize_pen_state(s)?));
        }
        while points.last().is_some_and(|p| !p.is_down() && libm::hypot(p.dh, p.dv) < PAD_MOVEMENT) {
            points.pop();
        }
        let glyph = Glyph::new(points, category);
        Ok(glyph.normalize_height().unwrap_or(glyph))
    }

    pub fn generate_with_features(&self, category: usize, style: &MultiScaleFeatures, seed: u64) -> Result<Glyph> {
        let x0 = self.sample(category, style, seed)?;
        self.decode(&x0, category)
    }

    /// A height-normalized glyph of `category` in the style of `reference`.
    pub fn generate(&self, category: usize, reference: &[Glyph], seed: u64) -> Result<Glyph> {
        let style = self.encode_style(reference)?;
        self.generate_with_features(category, &style, seed)
    }
}

/// A training glyph and the index of its writer.
#[derive(Debug, Clone, PartialEq)]
pub struct FontSample {
    pub glyph: Glyph,
    pub writer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FontTrainConfig {
    pub learning_rate: f64,
    pub clip: f64,
    pub decay: f64,
    pub batch: usize,
    /// Same-writer glyphs concatenated into each style reference.
    pub reference_glyphs: usize,
    pub contrastive: ContrastiveConfig,
    pub seed: u64,
}

impl Default for FontTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            clip: 1.0,
            decay: 0.9998,
            batch: 64,
            reference_glyphs: 4,
            contrastive: ContrastiveConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FontLoss {
    pub reconstruction: f64,
    /// Zero when the batch holds a single writer.
    pub contrastive: f64,
}

#[derive(Debug, Clone)]
pub struct FontTrainer {
    pub model: FontModel,
    pub optimizer: Adam,
    pub config: FontTrainConfig,
}

impl FontTrainer {
    /// Fits the trajectory statistics on `data` and checks categories.
    pub fn new(mut model: FontModel, data: &[FontSample], config: FontTrainConfig) -> Result<Self> {
        for s in data {
            if s.glyph.category >= model.config.categories {
                return Err(Error::UnknownCategory { category: s.glyph.category, count: model.config.categories });
            }
        }
        let glyphs: Vec<Glyph> = data.iter().map(|s| s.glyph.clone()).collect();
        model.stats = TrajStats::fit(&glyphs)?;
        let optimizer = Adam::new(Self::adam_config(&config), &model.store);
        Ok(Self { model, optimizer, config })
    }

    pub fn adam_config(config: &FontTrainConfig) -> AdamConfig {
        AdamConfig::new(config.learning_rate).with_clip(config.clip).with_decay(config.decay)
    }

    pub fn resume(model: FontModel, optimizer: Adam, config: FontTrainConfig) -> Self {
        Self { model, optimizer, config }
    }

    /// One Adam step on reconstruction plus contrastive loss.
    pub fn step(&mut self, data: &[FontSample]) -> Result<FontLoss> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut rng = Rng::derive(self.config.seed, self.optimizer.step);
        let mut pools: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in data.iter().enumerate() {
            pools.entry(s.writer).or_default().push(i);
        }
        let b = self.config.batch.clamp(1, data.len().max(1));
        let idx: Vec<usize> = (0..b).map(|_| rng.below(data.len())).collect();

        self.model.store.zero_grad();
        let model = &self.model;
        let (loss, grads) = {
            let mut g = Graph::with_params(&model.store);
            let mut total: Option<Var> = None;
            let mut writer_features: BTreeMap<usize, [Var; 3]> = BTreeMap::new();
            for &i in &idx {
                let s = &data[i];
                let pool = &pools[&s.writer];
                let others: Vec<usize> = pool.iter().copied().filter(|&j| j != i).collect();
                let refs: Vec<Glyph> = if others.is_empty() {
                    alloc::vec![s.glyph.clone()]
                } else {
                    (0..self.config.reference_glyphs.max(1))
                        .map(|_| data[others[rng.below(others.len())]].glyph.clone())
                        .collect()
                };
                let x0 = model.glyph_tensor(&s.glyph);
                let reference = model.reference_tensor(&refs);
                let t = 1 + rng.below(model.schedule.steps);
                let eps = gaussian(x0.shape(), &mut rng);
                let (l, feats) =
                    denoising_loss(&mut g, &model.net, &x0, &reference, s.glyph.category, t, &eps, &model.schedule)?;
                writer_features.entry(s.writer).or_insert(feats);
                total = Some(match total {
                    Some(acc) => g.add(acc, l)?,
                    None => l,
                });
            }
            let recon = g.scale(total.expect("batch is non-empty"), 1.0 / b as f32);
            let recon_value = g.value(recon).item() as f64;
            let (loss, contrastive_value) = if writer_features.len() >= 2 {
                let feats: Vec<[Var; 3]> = writer_features.into_values().collect();
                let seg = choose_segments(&g, &feats, self.config.contrastive.segment_len, &mut rng)?;
                let c = multi_scale_contrastive_loss(&mut g, &model.net.style, &feats, &seg, &self.config.contrastive)?;
                let cv = g.value(c).item() as f64;
                (g.add(recon, c)?, cv)
            } else {
                (recon, 0.0)
            };
            (FontLoss { reconstruction: recon_value, contrastive: contrastive_value }, g.backward(loss)?)
        };
        self.model.store.accumulate(&grads)?;
        self.optimizer.step(&mut self.model.store)?;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::reverse_mean;
    use crate::nn::gradcheck::check_params;

    fn tiny_config() -> DiffusionConfig {
        DiffusionConfig {
            categories: 3,
            style: StyleConfig { channels: [8, 16, 32, 64], proj_dim: 8 },
            unet_channels: [8, 16, 32, 64],
            steps: 20,
            n_max: 16,
            ..DiffusionConfig::toy(3)
        }
    }

    fn line_glyph(k: usize, n: usize) -> Glyph {
        let pts = (0..n).map(|i| PenPoint::new(0.1 * (i as f64 + k as f64), 0.05 * i as f64, 1.0)).collect();
        Glyph::new(pts, k)
    }

    #[test]
    fn assemble_input_rows() {
        let m = FontModel::new(tiny_config(), 1).unwrap();
        let mut rng = Rng::new(3);
        let x = gaussian(&[4, 3], &mut rng);
        let a = m.assemble_input(&x, 5, 1).unwrap();
        assert_eq!(a.shape(), &[4, INPUT_DIM]);
        let rows: Vec<&[f32]> = a.data().chunks(INPUT_DIM).collect();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(&r[..3], &x.data()[i * 3..i * 3 + 3]);
            assert_eq!(&r[3..], &rows[0][3..]);
        }
        let b = m.assemble_input(&x, 5, 2).unwrap();
        for (i, (u, v)) in a.data().iter().zip(b.data()).enumerate() {
            assert_eq!(u == v, i % INPUT_DIM < 3 + TIME_DIM, "column {}", i % INPUT_DIM);
        }
        let one = m.assemble_input(&gaussian(&[1, 3], &mut rng), 1, 0).unwrap();
        assert_eq!(one.shape(), &[1, 185]);
        assert!(matches!(m.assemble_input(&x, 5, 3), Err(Error::UnknownCategory { .. })));
    }

    #[test]
    fn denoiser_shapes_and_determinism() {
        let cfg = DiffusionConfig { n_max: 128, ..tiny_config() };
        let m = FontModel::new(cfg, 2).unwrap();
        let style = m.encode_style(&[line_glyph(0, 30)]).unwrap();
        let mut rng = Rng::new(4);
        for n in [8, 64, 128] {
            let x_in = m.assemble_input(&gaussian(&[n, 3], &mut rng), 3, 1).unwrap();
            let out = m.predict_noise(&x_in, &style).unwrap();
            assert_eq!(out.shape(), &[n, 3]);
            assert_eq!(out, m.predict_noise(&x_in, &style).unwrap());
        }
        let bad = m.assemble_input(&gaussian(&[12, 3], &mut rng), 3, 1).unwrap();
        assert!(matches!(m.predict_noise(&bad, &style), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_style_contributes_nothing() {
        let m = FontModel::new(tiny_config(), 5).unwrap();
        let zeros = |l: usize| {
            let c = m.config.style.channels;
            MultiScaleFeatures {
                f1: Tensor::zeros(&[l, c[1]]),
                f2: Tensor::zeros(&[l, c[2]]),
                f3: Tensor::zeros(&[l, c[3]]),
            }
        };
        let mut rng = Rng::new(6);
        let x_in = m.assemble_input(&gaussian(&[16, 3], &mut rng), 2, 0).unwrap();
        let a = m.predict_noise(&x_in, &zeros(1)).unwrap();
        let b = m.predict_noise(&x_in, &zeros(7)).unwrap();
        assert!(a.data().iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
    }

    #[test]
    fn reconstruction_loss_of_zero_denoiser_is_about_one() {
        let mut m = FontModel::new(tiny_config(), 7).unwrap();
        m.store.set("font.unet.out.w", Tensor::zeros(m.store.value(m.net.unet.out.w).shape())).unwrap();
        m.store.set("font.unet.out.b", Tensor::zeros(m.store.value(m.net.unet.out.b).shape())).unwrap();
        let x0 = m.glyph_tensor(&line_glyph(1, 10));
        let r = m.reference_tensor(&[line_glyph(0, 10)]);
        let mut rng = Rng::new(8);
        let draws = 400;
        let mean = (0..draws).map(|_| m.reconstruction_loss(&x0, &r, 1, &mut rng).unwrap()).sum::<f64>() / draws as f64;
        // each draw is the mean of 48 squared normals: variance 2/48 per draw
        let se = libm::sqrt(2.0 / 48.0 / draws as f64);
        assert!((mean - 1.0).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn oracle_denoiser_has_zero_loss_and_recovers_posterior() {
        let s = DiffusionConfig::toy(1).schedule().unwrap();
        let mut rng = Rng::new(9);
        let x0 = gaussian(&[8, 3], &mut rng);
        let eps = gaussian(&[8, 3], &mut rng);
        for t in [1, 2, 50, 200] {
            let xt = q_sample(&x0, t, &eps, &s).unwrap();
            let mu = reverse_mean(&xt, t, &eps, &s).unwrap();
            let (a, ab, ab1) = (s.alpha[t - 1], s.alpha_bar[t], s.alpha_bar[t - 1]);
            for ((m, x), y) in mu.data().iter().zip(x0.data()).zip(xt.data()) {
                let post = libm::sqrt(ab1) * (1.0 - a) / (1.0 - ab) * *x as f64
                    + libm::sqrt(a) * (1.0 - ab1) / (1.0 - ab) * *y as f64;
                assert!((*m as f64 - post).abs() < 1e-4, "t={t}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_binary() {
        let m = FontModel::new(tiny_config(), 10).unwrap();
        let refs = [line_glyph(0, 12)];
        let a = m.generate(2, &refs, 11).unwrap();
        assert_eq!(a, m.generate(2, &refs, 11).unwrap());
        assert!(a.points.iter().all(|p| p.s == 1.0 || p.s == -1.0));
        assert!(a.points.len() <= 16);
        assert_eq!(a.category, 2);
    }

    #[test]
    fn denoising_loss_gradient_spot_check() {
        let cfg = tiny_config();
        let mut rng = Rng::new(12);
        let mut store: ParamStore<f64> = ParamStore::new();
        let net = FontNet::new(&mut store, &cfg, &mut rng);
        let schedule = cfg.schedule().unwrap();
        let x0: Tensor<f64> = gaussian(&[8, 3], &mut rng).cast();
        let eps: Tensor<f64> = gaussian(&[8, 3], &mut rng).cast();
        let reference: Tensor<f64> = gaussian(&[16, 3], &mut rng).cast();
        let err = check_params(
            &store,
            |g| Ok(denoising_loss(g, &net, &x0, &reference, 1, 7, &eps, &schedule)?.0),
            Some((300, 13)),
        )
        .unwrap();
        assert!(err < 1e-3, "relative error {err}");
    }

    #[test]
    fn training_reduces_loss_and_resumes_identically() {
        let data: Vec<FontSample> = (0..6)
            .map(|i| FontSample { glyph: line_glyph(i % 3, 8 + i), writer: i % 2 })
            .collect();
        let cfg = FontTrainConfig { batch: 4, learning_rate: 3e-3, ..Default::default() };
        let model = FontModel::new(tiny_config(), 14).unwrap();
        let mut a = FontTrainer::new(model, &data, cfg).unwrap();
        let first = a.step(&data).unwrap();
        assert!(first.contrastive != 0.0 || first.reconstruction > 0.0);
        let mut b = FontTrainer::resume(a.model.clone(), a.optimizer.clone(), cfg);
        let la = a.step(&data).unwrap();
        let lb = b.step(&data).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.model.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>(),
                   b.model.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>());
    }
}
