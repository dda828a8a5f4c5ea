//! Conditional DDPM glyph synthesis: noise schedule, closed-form forward
//! process, ancestral reverse steps, the U-Net denoiser and the font model
//! that ties them to the style encoder.

mod model;
mod unet;

pub use model::{
    denoising_loss, DiffusionConfig, FontLoss, FontModel, FontSample, FontTrainConfig, FontTrainer, TrajStats,
    CHAR_DIM, INPUT_DIM, TIME_DIM,
};
pub use unet::UNetDenoiser;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::nn::{Real, Tensor};
use crate::rng::Rng;

/// `alpha[t-1]` is αₜ for `t = 1..=T`; `alpha_bar[t]` is ᾱₜ with ᾱ₀ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::InvalidTimestep { t, steps: self.steps });
        }
        Ok(())
    }

    /// αₜ for `1 ≤ t ≤ T`.
    pub fn alpha_at(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.alpha[t - 1])
    }

    /// σₜ² = (1 − αₜ)(1 − ᾱₜ₋₁)/(1 − ᾱₜ).
    pub fn sigma_sq(&self, t: usize) -> Result<f64> {
        let a = self.alpha_at(t)?;
        Ok((1.0 - a) * (1.0 - self.alpha_bar[t - 1]) / (1.0 - self.alpha_bar[t]))
    }
}

/// αₜ linear in `t` from `alpha_first` (t = 1) to `alpha_last` (t = T).
pub fn linear_schedule(steps: usize, alpha_first: f64, alpha_last: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidSchedule(format!("{steps} steps")));
    }
    for a in [alpha_first, alpha_last] {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidSchedule(format!("endpoint {a} outside (0, 1)")));
        }
    }
    let alpha: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                alpha_first
            } else {
                alpha_first + (alpha_last - alpha_first) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    for a in &alpha {
        let last = *alpha_bar.last().expect("non-empty");
        alpha_bar.push(last * a);
    }
    Ok(NoiseSchedule { steps, alpha, alpha_bar })
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `xₜ = √ᾱₜ·x₀ + √(1 − ᾱₜ)·ε`.
pub fn q_sample<T: Real>(x0: &Tensor<T>, t: usize, eps: &Tensor<T>, schedule: &NoiseSchedule) -> Result<Tensor<T>> {
    schedule.check(t)?;
    same_shape(x0, eps, "q_sample")?;
    let ab = schedule.alpha_bar[t];
    let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
    let data = x0.data().iter().zip(eps.data()).map(|(x, e)| T::from_f64(a * x.as_f64() + b * e.as_f64())).collect();
    Tensor::new(x0.shape(), data)
}

/// `μθ = (xₜ − (1 − αₜ)/√(1 − ᾱₜ)·εθ)/√αₜ`.
pub fn reverse_mean<T: Real>(x_t: &Tensor<T>, t: usize, eps_theta: &Tensor<T>, schedule: &NoiseSchedule) -> Result<Tensor<T>> {
    let a = schedule.alpha_at(t)?;
    same_shape(x_t, eps_theta, "reverse_step")?;
    let coef = (1.0 - a) / libm::sqrt(1.0 - schedule.alpha_bar[t]);
    let inv = 1.0 / libm::sqrt(a);
    let data =
        x_t.data().iter().zip(eps_theta.data()).map(|(x, e)| T::from_f64(inv * (x.as_f64() - coef * e.as_f64()))).collect();
    Tensor::new(x_t.shape(), data)
}

/// `xₜ₋₁ = μθ + σₜ·z`; `z` is ignored at `t = 1`.
pub fn reverse_step<T: Real>(
    x_t: &Tensor<T>,
    t: usize,
    eps_theta: &Tensor<T>,
    schedule: &NoiseSchedule,
    z: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut mu = reverse_mean(x_t, t, eps_theta, schedule)?;
    if t > 1 {
        same_shape(x_t, z, "reverse_step noise")?;
        let sigma = libm::sqrt(schedule.sigma_sq(t)?);
        for (m, zi) in mu.data_mut().iter_mut().zip(z.data()) {
            *m = T::from_f64(m.as_f64() + sigma * zi.as_f64());
        }
    }
    Ok(mu)
}

/// Runs t = T..1 from `x_T`. With `rng` absent every `z` is zero.
pub fn ancestral_sample<F>(schedule: &NoiseSchedule, x_t: Tensor, mut rng: Option<&mut Rng>, mut predict: F) -> Result<Tensor>
where
    F: FnMut(&Tensor, usize) -> Result<Tensor>,
{
    let mut x = x_t;
    for t in (1..=schedule.steps).rev() {
        let eps = predict(&x, t)?;
        let z = match rng.as_deref_mut() {
            Some(r) if t > 1 => gaussian(x.shape(), r),
            _ => Tensor::zeros(x.shape()),
        };
        x = reverse_step(&x, t, &eps, schedule, &z)?;
    }
    Ok(x)
}

/// Standard normal tensor.
pub fn gaussian(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal() as f32).collect()).expect("shape matches")
}

/// Sinusoidal encoding of an integer timestep: sines in the first half,
/// cosines in the second, frequencies `10000^(−i/(dim/2))`.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = alloc::vec![0.0; dim];
    for i in 0..half {
        let w = libm::pow(10000.0, -(i as f64) / half as f64);
        out[i] = libm::sin(t as f64 * w);
        out[half + i] = libm::cos(t as f64 * w);
    }
    out
}
