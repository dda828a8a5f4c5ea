use alloc::vec::Vec;

use super::param::ParamStore;
use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Multiplied into the learning rate after every step.
    pub decay_per_batch: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: None, decay_per_batch: 1.0 }
    }

    pub fn with_clip(mut self, clip: f64) -> Self {
        self.clip_norm = Some(clip);
        self
    }

    pub fn with_decay(mut self, decay: f64) -> Self {
        self.decay_per_batch = decay;
        self
    }
}

/// Adam moments and schedule for one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    pub learning_rate: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = |p: &super::param::Parameter<T>| alloc::vec![T::zero(); p.value.len()];
        Self {
            config,
            learning_rate: config.learning_rate,
            step: 0,
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
        }
    }

    /// Clip to the global norm, apply one Adam update, then decay the rate.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(shape_err("optimizer built for a different parameter set"));
        }
        let mut sq = 0.0;
        for p in store.iter() {
            let g = p.grad.as_ref().ok_or_else(|| Error::MissingGradient(p.name.clone()))?;
            sq += g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
        }
        let norm = libm::sqrt(sq);
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };

        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let lr = self.learning_rate;
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.as_ref().expect("checked above");
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g.as_f64() * clip;
                let mn = c.beta1 * m.as_f64() + (1.0 - c.beta1) * g;
                let vn = c.beta2 * v.as_f64() + (1.0 - c.beta2) * g * g;
                *m = T::from_f64(mn);
                *v = T::from_f64(vn);
                let update = lr * (mn / bc1) / (libm::sqrt(vn / bc2) + c.eps);
                *w = T::from_f64(w.as_f64() - update);
            }
        }
        self.learning_rate *= c.decay_per_batch;
        Ok(())
    }

    /// Moment tensors in parameter order, for checkpointing.
    pub fn moments(&self, store: &ParamStore<T>) -> Vec<(Tensor<T>, Tensor<T>)> {
        store
            .iter()
            .zip(self.m.iter().zip(&self.v))
            .map(|(p, (m, v))| {
                (
                    Tensor::new(p.value.shape(), m.clone()).expect("moment shape"),
                    Tensor::new(p.value.shape(), v.clone()).expect("moment shape"),
                )
            })
            .collect()
    }

    pub fn set_moments(&mut self, index: usize, m: &Tensor<T>, v: &Tensor<T>) -> Result<()> {
        let dst = self.m.get_mut(index).ok_or_else(|| shape_err("moment index out of range"))?;
        if dst.len() != m.len() || self.v[index].len() != v.len() {
            return Err(shape_err("moment length mismatch"));
        }
        dst.copy_from_slice(m.data());
        self.v[index].copy_from_slice(v.data());
        Ok(())
    }
}
