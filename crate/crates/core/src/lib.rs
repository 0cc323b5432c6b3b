//! Continual self-supervised learning for wearable human activity recognition.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense `f64` tensors, a recorded reverse-mode graph,
//!   optimizers and EMA updates.
//! - [`dataio`]: WISDM parsing, windowing, normalization, subject splits,
//!   class-incremental task specs, replay buffers and a synthetic generator.
//! - [`augment`]: rotation, scaling and time-warp transforms for two-view
//!   contrastive training.
//! - [`model`]: the convolutional encoder, projection/prediction heads and
//!   the growing classifier, plus checkpoints.
//! - [`ssl`]: BYOL-style and MoCo-style objectives with their EMA branches.
//! - [`continual`]: the four loss terms, their importance-weighted sum and
//!   the per-task training loop for Kaizen, CaSSLe and No-Distill.
//! - [`eval`]: the accuracy matrix and its aggregate metrics.
//! - [`runner`]: experiment configs, orchestration, sweeps and SVG plots.

pub mod augment;
pub mod continual;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod runner;
pub mod ssl;

pub use error::{Error, Result};
pub use numerics::{Graph, NodeId, Optimizer, Parameter, Tensor};
