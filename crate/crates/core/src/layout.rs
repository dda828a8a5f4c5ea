//! Autoregressive layout planning.
//!
//! [`LayoutModel`] is a two-layer LSTM that reads the previous bounding box
//! and the current category embedding and emits the next box. Feeding a
//! reference line's true boxes first (the prefix) lets the recurrent state
//! pick up that writer's layout habits before the target boxes are produced.
//! [`CategoryBoxStats`] is the per-category Gaussian baseline.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::nn::layers::{Linear, LstmCell};
use crate::nn::{Adam, AdamConfig, Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::Rng;
use crate::traj::{BoundingBox, Layout};

/// Heights and widths are never generated smaller than this.
pub const MIN_EXTENT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutConfig {
    pub categories: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl LayoutConfig {
    pub fn new(categories: usize) -> Self {
        Self { categories, embed_dim: 64, hidden: 128, layers: 2 }
    }
}

/// One text line as seen by the layout model.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSample {
    pub categories: Vec<usize>,
    pub boxes: Vec<BoundingBox>,
    /// Lines sharing a writer can serve as each other's context in training.
    pub writer: Option<usize>,
}

impl LayoutSample {
    pub fn new(categories: Vec<usize>, layout: Layout) -> Result<Self> {
        if categories.len() != layout.len() {
            return Err(shape_err(format!("{} categories for {} boxes", categories.len(), layout.len())));
        }
        Ok(Self { categories, boxes: layout.boxes, writer: None })
    }

    pub fn with_writer(mut self, writer: usize) -> Self {
        self.writer = Some(writer);
        self
    }

    /// The first `len` boxes of `self` followed by `line`, whose centres are
    /// moved to continue from the last prefix box.
    fn prepend_to(&self, len: usize, line: &LayoutSample) -> LayoutSample {
        let mut categories = self.categories[..len].to_vec();
        let mut boxes = self.boxes[..len].to_vec();
        let first_step = match line.boxes.as_slice() {
            [a, b, ..] => b.cy - a.cy,
            _ => 0.0,
        };
        let offset = boxes[len - 1].cy + first_step - line.boxes[0].cy;
        categories.extend_from_slice(&line.categories);
        boxes.extend(line.boxes.iter().map(|b| BoundingBox { cy: b.cy + offset, ..*b }));
        LayoutSample { categories, boxes, writer: line.writer }
    }
}

/// Per-component mean and standard deviation of the training boxes, in
/// `[height, width, cy, dx]` order. The cy entry describes the step
/// `cy_i - cy_{i-1}` rather than the absolute centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStandardizer {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl Default for BoxStandardizer {
    fn default() -> Self {
        Self { mean: [1.0, 1.0, 0.0, 0.0], std: [1.0; 4] }
    }
}

impl BoxStandardizer {
    pub fn fit(samples: &[LayoutSample]) -> Result<Self> {
        let boxes: Vec<[f64; 4]> = samples.iter().flat_map(|s| s.boxes.iter().map(|b| b.to_array())).collect();
        if boxes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let steps: Vec<f64> = samples.iter().flat_map(|s| s.boxes.windows(2).map(|p| p[1].cy - p[0].cy)).collect();
        let moments = |v: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = v.collect();
            if v.is_empty() {
                return (0.0, 1.0);
            }
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            (m, if var > 1e-12 { libm::sqrt(var) } else { 1.0 })
        };
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        for j in 0..4 {
            (mean[j], std[j]) = if j == 2 { moments(&mut steps.iter().copied()) } else { moments(&mut boxes.iter().map(|b| b[j])) };
        }
        for m in &mut mean[..2] {
            *m = m.max(MIN_EXTENT);
        }
        Ok(Self { mean, std })
    }

    /// `prev_cy` is the centre of the box before `b`; without one the cy
    /// step is taken to be the mean step.
    pub fn standardize(&self, b: &BoundingBox, prev_cy: Option<f64>) -> [f64; 4] {
        let mut a = b.to_array();
        a[2] = prev_cy.map_or(self.mean[2], |p| b.cy - p);
        core::array::from_fn(|j| (a[j] - self.mean[j]) / self.std[j])
    }

    pub fn to_array(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        out[..4].copy_from_slice(&self.mean);
        out[4..].copy_from_slice(&self.std);
        out
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self { mean: [a[0], a[1], a[2], a[3]], std: [a[4], a[5], a[6], a[7]] }
    }
}

/// Recurrent state of every LSTM layer, one row per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutState {
    pub h: Vec<Tensor>,
    pub c: Vec<Tensor>,
    /// Centre of the box before the one fed at the next step.
    pub before_cy: Option<f64>,
}

impl LayoutState {
    pub fn zeros(config: &LayoutConfig, batch: usize) -> Self {
        let z = || (0..config.layers).map(|_| Tensor::zeros(&[batch, config.hidden])).collect();
        Self { h: z(), c: z(), before_cy: None }
    }
}

/// The in-context layout generator.
#[derive(Debug, Clone)]
pub struct LayoutModel {
    pub config: LayoutConfig,
    pub store: ParamStore,
    pub standardizer: BoxStandardizer,
    embed: ParamId,
    cells: Vec<LstmCell>,
    head: Linear,
}

struct StepVars {
    out: Var,
    h: Vec<Var>,
    c: Vec<Var>,
}

impl LayoutModel {
    pub fn new(config: LayoutConfig, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let embed = store.add_uniform("layout.embed", &[config.categories, config.embed_dim], 1.0, &mut rng);
        let mut cells = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = if l == 0 { 4 + config.embed_dim } else { config.hidden };
            cells.push(LstmCell::new(&mut store, &format!("layout.lstm{l}"), input, config.hidden, &mut rng));
        }
        let head = Linear::new(&mut store, "layout.head", config.hidden, 4, &mut rng);
        Self { config, store, standardizer: BoxStandardizer::default(), embed, cells, head }
    }

    fn check_category(&self, c: usize) -> Result<()> {
        if c >= self.config.categories {
            return Err(Error::UnknownCategory { category: c, count: self.config.categories });
        }
        Ok(())
    }

    /// Raw head output for a batch: `prev[B×4]` standardized previous boxes.
    fn step_vars(
        &self,
        g: &mut Graph<'_, f32>,
        prev: Var,
        categories: &[usize],
        h: &[Var],
        c: &[Var],
    ) -> Result<StepVars> {
        let table = g.param(self.embed);
        let e = g.gather_rows(table, categories)?;
        let mut x = g.concat_cols(&[prev, e])?;
        let mut hs = Vec::with_capacity(self.cells.len());
        let mut cs = Vec::with_capacity(self.cells.len());
        for (l, cell) in self.cells.iter().enumerate() {
            let (hn, cn) = cell.step(g, x, h[l], c[l])?;
            hs.push(hn);
            cs.push(cn);
            x = hn;
        }
        let out = self.head.forward(g, x)?;
        Ok(StepVars { out, h: hs, c: cs })
    }

    /// Maps head outputs `o[B×4]` to real-unit boxes given the previous real
    /// cy of each row: height and width are `softplus(o)·mean`, cy moves from
    /// the previous centre by `mean + o·std`, dx is `mean + o·std`.
    fn decode(&self, g: &mut Graph<'_, f32>, o: Var, prev_cy: Var) -> Result<Var> {
        let s = &self.standardizer;
        let oh = g.slice_cols(o, 0, 1)?;
        let oh = g.softplus(oh);
        let h = g.scale(oh, s.mean[0] as f32);
        let ow = g.slice_cols(o, 1, 1)?;
        let ow = g.softplus(ow);
        let w = g.scale(ow, s.mean[1] as f32);
        let oc = g.slice_cols(o, 2, 1)?;
        let oc = g.scale(oc, s.std[2] as f32);
        let oc = g.add_scalar(oc, s.mean[2] as f32);
        let cy = g.add(prev_cy, oc)?;
        let od = g.slice_cols(o, 3, 1)?;
        let od = g.scale(od, s.std[3] as f32);
        let dx = g.add_scalar(od, s.mean[3] as f32);
        g.concat_cols(&[h, w, cy, dx])
    }

    /// Real cy of the previous box; a line without one starts at 0.
    fn prev_cy(prev: Option<&BoundingBox>) -> f64 {
        prev.map_or(0.0, |b| b.cy)
    }

    fn input_row(&self, prev: Option<&BoundingBox>, before_cy: Option<f64>) -> [f32; 4] {
        match prev {
            Some(b) => self.standardizer.standardize(b, before_cy).map(|v| v as f32),
            None => [0.0; 4],
        }
    }

    /// One autoregressive step for a single sequence. `prev` is `None` for
    /// the zero start box.
    pub fn step(&self, prev: Option<&BoundingBox>, category: usize, state: &LayoutState) -> Result<(BoundingBox, LayoutState)> {
        self.check_category(category)?;
        if state.h.len() != self.config.layers || state.h.iter().any(|t| t.shape() != [1, self.config.hidden]) {
            return Err(shape_err("layout state does not match the model"));
        }
        let mut g = Graph::with_params(&self.store);
        let x = g.input(Tensor::new(&[1, 4], self.input_row(prev, state.before_cy).to_vec())?);
        let h: Vec<Var> = state.h.iter().map(|t| g.input(t.clone())).collect();
        let c: Vec<Var> = state.c.iter().map(|t| g.input(t.clone())).collect();
        let sv = self.step_vars(&mut g, x, &[category], &h, &c)?;
        let pc = g.input(Tensor::scalar(Self::prev_cy(prev) as f32).reshape(&[1, 1])?);
        let real = self.decode(&mut g, sv.out, pc)?;
        let v = g.value(real).data();
        let b = BoundingBox::new(
            (v[0] as f64).max(MIN_EXTENT),
            (v[1] as f64).max(MIN_EXTENT),
            v[2] as f64,
            v[3] as f64,
        );
        let next = LayoutState {
            h: sv.h.iter().map(|&v| g.value(v).clone()).collect(),
            c: sv.c.iter().map(|&v| g.value(v).clone()).collect(),
            before_cy: prev.map(|p| p.cy),
        };
        Ok((b, next))
    }

    /// Feeds the prefix boxes, discarding their predictions, then generates
    /// one box per target category, each fed back as the next input.
    pub fn generate_in_context(
        &self,
        prefix_boxes: &[BoundingBox],
        prefix_categories: &[usize],
        target_categories: &[usize],
    ) -> Result<Layout> {
        if prefix_boxes.len() != prefix_categories.len() {
            return Err(shape_err(format!(
                "{} prefix boxes for {} prefix categories",
                prefix_boxes.len(),
                prefix_categories.len()
            )));
        }
        for &c in prefix_categories.iter().chain(target_categories) {
            self.check_category(c)?;
        }
        let mut state = LayoutState::zeros(&self.config, 1);
        let mut prev: Option<BoundingBox> = None;
        for (b, &c) in prefix_boxes.iter().zip(prefix_categories) {
            state = self.step(prev.as_ref(), c, &state)?.1;
            prev = Some(*b);
        }
        let mut boxes = Vec::with_capacity(target_categories.len());
        for &c in target_categories {
            let (b, next) = self.step(prev.as_ref(), c, &state)?;
            boxes.push(b);
            state = next;
            prev = Some(b);
        }
        Ok(Layout::new(boxes))
    }

    /// In-context generation with an empty prefix.
    pub fn generate_unconditional(&self, target_categories: &[usize]) -> Result<Layout> {
        self.generate_in_context(&[], &[], target_categories)
    }

    /// Teacher-forced mean ℓ1 loss, in standardized units, over a batch of
    /// lines padded to the longest one.
    pub fn teacher_forcing_loss(&self, g: &mut Graph<'_, f32>, batch: &[&LayoutSample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let b = batch.len();
        let steps = batch.iter().map(|s| s.boxes.len()).max().unwrap_or(0);
        let s = self.standardizer;
        let inv_std = g.input(Tensor::new(&[4], s.std.iter().map(|&v| (1.0 / v) as f32).collect())?);
        let mut h: Vec<Var> = (0..self.config.layers).map(|_| g.input(Tensor::zeros(&[b, self.config.hidden]))).collect();
        let mut c = h.clone();
        let mut terms = Vec::with_capacity(steps);
        let mut count = 0usize;
        for t in 0..steps {
            let mut prev = Vec::with_capacity(b * 4);
            let mut prev_cy = Vec::with_capacity(b);
            let mut target = Vec::with_capacity(b * 4);
            let mut mask = Vec::with_capacity(b * 4);
            let mut cats = Vec::with_capacity(b);
            for sample in batch {
                let valid = t < sample.boxes.len();
                let p = if valid && t > 0 { Some(&sample.boxes[t - 1]) } else { None };
                let before = if valid && t > 1 { Some(sample.boxes[t - 2].cy) } else { None };
                prev.extend(self.input_row(p, before));
                prev_cy.push(Self::prev_cy(p) as f32);
                let tgt = if valid { sample.boxes[t].to_array() } else { [0.0; 4] };
                target.extend(tgt.map(|v| v as f32));
                // the first box has no centre to step from
                let m = [valid, valid, valid && t > 0, valid].map(|v| if v { 1.0f32 } else { 0.0 });
                count += m.iter().filter(|&&v| v > 0.0).count();
                mask.extend(m);
                let cat = if valid { sample.categories[t] } else { 0 };
                self.check_category(cat)?;
                cats.push(cat);
            }
            let x = g.input(Tensor::new(&[b, 4], prev)?);
            let sv = self.step_vars(g, x, &cats, &h, &c)?;
            h = sv.h;
            c = sv.c;
            let pc = g.input(Tensor::new(&[b, 1], prev_cy)?);
            let pred = self.decode(g, sv.out, pc)?;
            let tgt = g.input(Tensor::new(&[b, 4], target)?);
            let diff = g.sub(pred, tgt)?;
            let diff = g.mul_row(diff, inv_std)?;
            let diff = g.abs(diff);
            let m = g.input(Tensor::new(&[b, 4], mask)?);
            let diff = g.mul(diff, m)?;
            terms.push(g.sum(diff));
        }
        let all = g.concat_rows(&terms)?;
        let total = g.sum(all);
        Ok(g.scale(total, 1.0 / count.max(1) as f32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutTrainConfig {
    pub learning_rate: f64,
    pub batch: usize,
    pub seed: u64,
    /// Half-width, in standard deviations of the fitted cy step and dx, of a
    /// uniform per-line offset added to every cy step and dx of a training
    /// line. 0 disables it.
    pub augment: f64,
    /// Probability that a training line is preceded by the start (1 to 10
    /// boxes) of another line by the same writer, as in in-context use.
    pub context: f64,
}

/// Longest context prefix used in training.
pub const MAX_CONTEXT: usize = 10;

impl Default for LayoutTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, batch: 32, seed: 0, augment: 1.0, context: 0.5 }
    }
}

/// Resumable teacher-forcing trainer. Batch `i` is drawn from a stream
/// derived from `(seed, i)`, so resuming at step `i` reproduces it.
#[derive(Debug, Clone)]
pub struct LayoutTrainer {
    pub model: LayoutModel,
    pub optimizer: Adam,
    pub config: LayoutTrainConfig,
}

impl LayoutTrainer {
    /// Fits the standardizer to `data` and sets up Adam.
    pub fn new(mut model: LayoutModel, data: &[LayoutSample], config: LayoutTrainConfig) -> Result<Self> {
        validate(data, &model)?;
        model.standardizer = BoxStandardizer::fit(data)?;
        let optimizer = Adam::new(AdamConfig::new(config.learning_rate), &model.store);
        Ok(Self { model, optimizer, config })
    }

    /// Continues from a restored model and optimizer.
    pub fn resume(model: LayoutModel, optimizer: Adam, config: LayoutTrainConfig) -> Self {
        Self { model, optimizer, config }
    }

    pub fn batch_indices(&self, step: u64, n: usize) -> Vec<usize> {
        let mut rng = Rng::derive(self.config.seed, step);
        (0..self.config.batch.min(n).max(1)).map(|_| rng.below(n)).collect()
    }

    /// Optionally prepends context from another line of the same writer,
    /// then adds a random per-line slant and spacing offset.
    fn prepare(&self, data: &[LayoutSample], i: usize, rng: &mut Rng) -> LayoutSample {
        let sample = &data[i];
        let mut out = sample.clone();
        if rng.uniform() < self.config.context {
            if let Some(w) = sample.writer {
                let others: Vec<usize> = (0..data.len()).filter(|&j| j != i && data[j].writer == Some(w)).collect();
                if !others.is_empty() {
                    let other = &data[others[rng.below(others.len())]];
                    let len = 1 + rng.below(MAX_CONTEXT.min(other.boxes.len()));
                    out = other.prepend_to(len, sample);
                }
            }
        }
        let (a, s) = (self.config.augment, &self.model.standardizer);
        if a <= 0.0 {
            return out;
        }
        let slant = rng.uniform_range(-a, a) * s.std[2];
        let spacing = rng.uniform_range(-a, a) * s.std[3];
        for (i, b) in out.boxes.iter_mut().enumerate() {
            b.cy += slant * i as f64;
            b.dx += spacing;
        }
        out
    }

    /// One Adam step on a sampled batch; returns the batch loss.
    pub fn step(&mut self, data: &[LayoutSample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let idx = self.batch_indices(self.optimizer.step, data.len());
        let mut rng = Rng::derive(self.config.seed ^ 0x4155_4720, self.optimizer.step);
        let prepared: Vec<LayoutSample> = idx.iter().map(|&i| self.prepare(data, i, &mut rng)).collect();
        let batch: Vec<&LayoutSample> = prepared.iter().collect();
        self.model.store.zero_grad();
        let (loss, grads) = {
            let mut g = Graph::with_params(&self.model.store);
            let loss = self.model.teacher_forcing_loss(&mut g, &batch)?;
            (g.value(loss).item() as f64, g.backward(loss)?)
        };
        self.model.store.accumulate(&grads)?;
        self.optimizer.step(&mut self.model.store)?;
        Ok(loss)
    }
}

fn validate(data: &[LayoutSample], model: &LayoutModel) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for s in data {
        if s.boxes.len() < 2 {
            return Err(Error::NeedTwoBoxes);
        }
        if s.categories.len() != s.boxes.len() {
            return Err(shape_err("categories and boxes differ in length"));
        }
        for &c in &s.categories {
            model.check_category(c)?;
        }
    }
    Ok(())
}

/// Trains for `steps` batches and returns the loss history.
pub fn train_teacher_forcing(
    model: LayoutModel,
    data: &[LayoutSample],
    config: LayoutTrainConfig,
    steps: usize,
) -> Result<(LayoutModel, Vec<f64>)> {
    let mut trainer = LayoutTrainer::new(model, data, config)?;
    let mut history = Vec::with_capacity(steps);
    for _ in 0..steps {
        history.push(trainer.step(data)?);
    }
    Ok((trainer.model, history))
}

/// Per-category diagonal Gaussians over boxes, the layout baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryBoxStats {
    /// `None` where a category had fewer than two occurrences.
    pub per_category: Vec<Option<([f64; 4], [f64; 4])>>,
    pub global: ([f64; 4], [f64; 4]),
}

/// Population mean and variance, shifted by the first box so constant data
/// comes out exact.
fn moments(boxes: &[[f64; 4]]) -> ([f64; 4], [f64; 4]) {
    let n = boxes.len() as f64;
    let first = boxes[0];
    let shift: [f64; 4] = core::array::from_fn(|j| boxes.iter().map(|b| b[j] - first[j]).sum::<f64>() / n);
    let mean = core::array::from_fn(|j| first[j] + shift[j]);
    let var = core::array::from_fn(|j| {
        boxes.iter().map(|b| (b[j] - first[j] - shift[j]) * (b[j] - first[j] - shift[j])).sum::<f64>() / n
    });
    (mean, var)
}

pub fn gaussian_fit(data: &[LayoutSample], categories: usize) -> Result<CategoryBoxStats> {
    let mut by_cat: Vec<Vec<[f64; 4]>> = alloc::vec![Vec::new(); categories];
    let mut all = Vec::new();
    for s in data {
        for (&c, b) in s.categories.iter().zip(&s.boxes) {
            if c >= categories {
                return Err(Error::UnknownCategory { category: c, count: categories });
            }
            by_cat[c].push(b.to_array());
            all.push(b.to_array());
        }
    }
    if all.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_category = by_cat.iter().map(|v| (v.len() >= 2).then(|| moments(v))).collect();
    Ok(CategoryBoxStats { per_category, global: moments(&all) })
}

/// Independent draws per box; categories without statistics use the global fit.
pub fn gaussian_sample(stats: &CategoryBoxStats, categories: &[usize], seed: u64) -> Layout {
    let mut rng = Rng::new(seed);
    let boxes = categories
        .iter()
        .map(|&c| {
            let (mean, var) = stats.per_category.get(c).copied().flatten().unwrap_or(stats.global);
            let a: [f64; 4] = core::array::from_fn(|j| mean[j] + libm::sqrt(var[j]) * rng.normal());
            BoundingBox::new(a[0].max(MIN_EXTENT), a[1].max(MIN_EXTENT), a[2], a[3])
        })
        .collect();
    Layout::new(boxes)
}
