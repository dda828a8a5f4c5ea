//! Minimal tensors, reverse-mode autodiff, layers and Adam.

pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod param;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::{Real, Tensor};
