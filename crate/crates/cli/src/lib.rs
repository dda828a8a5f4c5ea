//! File formats, checkpoints, rendering and the training/generation
//! pipeline around `inkline-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod render;

pub use error::{CliError, Result};
