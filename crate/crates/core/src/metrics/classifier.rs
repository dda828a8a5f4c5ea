//! Content and style classifiers for scoring generated glyphs: the style
//! encoder architecture, global mean pooling of f³ and a linear head trained
//! with cross-entropy.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::layers::Linear;
use crate::nn::{Adam, AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::rng::Rng;
use crate::style::{StyleConfig, StyleEncoder};
use crate::traj::{Glyph, PenPoint};

/// Glyphs concatenated per style sample.
pub const STYLE_GLYPHS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// One glyph in, its category out.
    Content,
    /// Several glyphs of one writer concatenated along time, writer out.
    Style,
}

/// Rows `(dh, dv, s)` padded with `(0, 0, −1)` to a multiple of `multiple`.
pub fn trajectory_tensor(points: &[PenPoint], multiple: usize) -> Tensor {
    let n = points.len().div_ceil(multiple).max(1) * multiple;
    let mut data = Vec::with_capacity(n * 3);
    for p in points.iter().copied().chain(core::iter::repeat(PenPoint::PAD)).take(n) {
        data.extend([p.dh as f32, p.dv as f32, p.s as f32]);
    }
    Tensor::new(&[n, 3], data).expect("row count")
}

/// Glyph trajectories joined end to end.
pub fn concat_glyphs(glyphs: &[Glyph]) -> Vec<PenPoint> {
    glyphs.iter().flat_map(|g| g.points.iter().copied()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub style: StyleConfig,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { style: StyleConfig::toy(), steps: 300, batch: 16, learning_rate: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub task: Task,
    pub classes: usize,
    pub store: ParamStore,
    encoder: StyleEncoder,
    head: Linear,
    mean: [f32; 3],
    std: [f32; 3],
}

impl Classifier {
    fn standardized(&self, x: &Tensor) -> Result<Tensor> {
        let mut t = x.clone();
        for row in t.data_mut().chunks_mut(3) {
            for j in 0..3 {
                row[j] = (row[j] - self.mean[j]) / self.std[j];
            }
        }
        t.transpose()
    }

    fn logits(&self, g: &mut Graph<'_, f32>, x: &Tensor) -> Result<Var> {
        let xv = g.input(self.standardized(x)?);
        let [_, _, f3] = self.encoder.forward(g, xv)?;
        let pooled = g.mean_cols(f3)?;
        let row = g.transpose(pooled)?;
        self.head.forward(g, row)
    }

    /// Most likely class of one `[L × 3]` input; ties go to the lower index.
    pub fn classify(&self, input: &Tensor) -> Result<usize> {
        let mut g = Graph::with_params(&self.store);
        let l = self.logits(&mut g, input)?;
        let v = g.value(l).data();
        Ok((0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best }))
    }

    /// Fraction of inputs classified as their label.
    pub fn accuracy(&self, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut hits = 0;
        for (x, &y) in inputs.iter().zip(labels) {
            hits += usize::from(self.classify(x)? == y);
        }
        Ok(hits as f64 / inputs.len() as f64)
    }
}

/// Trains a classifier on `[L × 3]` inputs (each `L` a multiple of 8).
pub fn train_classifier(task: Task, inputs: &[Tensor], labels: &[usize], config: &ClassifierConfig) -> Result<Classifier> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::EmptyDataset);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = alloc::vec![false; classes];
    for &l in labels {
        seen[l] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::NeedTwoClasses);
    }

    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0.0;
    for x in inputs {
        for row in x.data().chunks(3) {
            for j in 0..3 {
                sum[j] += row[j] as f64;
                sq[j] += (row[j] as f64) * (row[j] as f64);
            }
            n += 1.0;
        }
    }
    let mean = sum.map(|s| (s / n) as f32);
    let std: [f32; 3] = core::array::from_fn(|j| {
        let var = sq[j] / n - (sum[j] / n) * (sum[j] / n);
        if var > 1e-12 { libm::sqrt(var) as f32 } else { 1.0 }
    });

    let mut rng = Rng::new(config.seed);
    let mut store = ParamStore::new();
    let encoder = StyleEncoder::new(&mut store, "cls.enc", config.style, &mut rng);
    let head = Linear::new(&mut store, "cls.head", config.style.channels[3], classes, &mut rng);
    let mut model = Classifier { task, classes, store, encoder, head, mean, std };
    let mut opt = Adam::new(AdamConfig::new(config.learning_rate), &model.store);
    for step in 0..config.steps {
        let mut brng = Rng::derive(config.seed, step as u64);
        let idx: Vec<usize> = (0..config.batch.min(inputs.len())).map(|_| brng.below(inputs.len())).collect();
        model.store.zero_grad();
        let grads = {
            let mut g = Graph::with_params(&model.store);
            let rows: Vec<Var> = idx.iter().map(|&i| model.logits(&mut g, &inputs[i])).collect::<Result<_>>()?;
            let logits = g.concat_rows(&rows)?;
            let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let loss = g.cross_entropy(logits, &ys)?;
            g.backward(loss)?
        };
        model.store.accumulate(&grads)?;
        opt.step(&mut model.store)?;
    }
    Ok(model)
}
