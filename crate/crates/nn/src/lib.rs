//! Minimal reverse-mode tensor engine and the ES-ViT classifier built on it.
//!
//! [`graph::Graph`] records one forward pass and replays it backwards;
//! [`model::EsVitModel`] wires the plain ViT encoder together with the
//! convolutional global embedding, squeeze-and-excitation gate and per-layer
//! fusion; [`train`] and [`metrics`] provide the optimisation loop and the
//! evaluation report.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{NnError, Result};
pub use graph::{Graph, Var};
pub use real::Real;
pub use tensor::Tensor;
