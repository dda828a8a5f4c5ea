//! Core algorithms for hierarchical online handwriting generation.
//!
//! A text line is produced in two decoupled stages: an autoregressive layout
//! planner predicts one bounding box per character, and a conditional
//! denoising diffusion model draws each character's pen trajectory at unit
//! height. The glyphs are then scaled into their boxes.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `inkline` crate.
//!
//! Module map:
//!
//! - [`traj`]: pen trajectories, preprocessing, layout extraction and composition
//! - [`nn`]: dense tensors, reverse-mode autodiff, layers and the Adam optimizer
//! - [`layout`]: the in-context LSTM layout generator and the Gaussian baseline
//! - [`style`]: the multi-scale convolutional style encoder and its contrastive loss
//! - [`diffusion`]: noise schedule, 1D U-Net denoiser, training loss and sampling
//! - [`metrics`]: DTW, geometric layout features, AR/CR and evaluation classifiers
//! - [`synth`]: the seeded parametric-writer corpus generator
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;

pub mod diffusion;
pub mod layout;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod style;
pub mod synth;
pub mod traj;

pub use error::{Error, Result};
pub use rng::Rng;
