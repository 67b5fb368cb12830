//! Deterministic federated-learning simulator with data-free knowledge
//! distillation.
//!
//! The crate is organized as:
//! - [`numerics`]: dense tensors, layers, losses, optimizers, gradient checks
//! - [`data`]: datasets, IDX files, Dirichlet partitioning, the 2-D prototype
//! - [`models`]: the split classifier, the conditional generator, logit stats
//! - [`protocols`]: server/client state machines for the FL algorithms
//! - [`harness`]: configuration, experiments, evaluation, CSV/SVG output
//!
//! Every run is a pure function of its configuration and seed: RNG streams
//! are derived per consumer, client work parallelizes without changing
//! results, and reruns produce identical metrics.

pub mod data;
pub mod error;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod protocols;
pub mod rng;

pub use error::{Error, Result};
