//! Server/client state machines for the federated algorithms.
//!
//! One round is: sample active users, broadcast, run local updates in
//! parallel, aggregate in ascending client-id order, then any server-side
//! learning (generator training, ensemble distillation). All randomness
//! comes from streams keyed by `(seed, role, client, round)`, so results do
//! not depend on scheduling.

pub mod client;
pub mod fusion;
pub mod generator_training;
pub mod server;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use client::{local_update, ClientState, LocalContext, LocalOutcome, UpdatePayload, WireUpdate};
pub use fusion::{ensemble_predict, server_distill_fusion};
pub use generator_training::{train_generator, TeacherPredictor};
pub use server::{aggregate_round, run_round, sample_active_users, RoundOutcome, ServerState};

/// The federated algorithms the simulator implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    #[serde(rename = "fedensemble")]
    FedEnsemble,
    #[serde(rename = "feddistill")]
    FedDistill,
    #[serde(rename = "feddistill_plus")]
    FedDistillPlus,
    #[serde(rename = "feddfusion")]
    FedDFusion,
    #[serde(rename = "fedgen")]
    FedGen,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::FedEnsemble => "fedensemble",
            Algorithm::FedDistill => "feddistill",
            Algorithm::FedDistillPlus => "feddistill_plus",
            Algorithm::FedDFusion => "feddfusion",
            Algorithm::FedGen => "fedgen",
        }
    }

    /// Whether the algorithm shares model parameters at all.
    pub fn shares_parameters(self) -> bool {
        !matches!(self, Algorithm::FedDistill)
    }

    /// Whether the algorithm has a predictor-only sharing variant.
    pub fn supports_partial(self) -> bool {
        matches!(
            self,
            Algorithm::FedAvg | Algorithm::FedDistillPlus | Algorithm::FedGen
        )
    }
}

/// Which parameter block crosses the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingMode {
    Full,
    PredictorOnly,
}

/// Every knob a round needs. Mirrors the flat experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundConfig {
    pub algorithm: Algorithm,
    /// Total clients K.
    pub num_clients: usize,
    /// Active clients per round |A|.
    pub active_clients: usize,
    /// Local steps T.
    pub local_steps: usize,
    /// Real mini-batch size B.
    pub batch_size: usize,
    /// Synthetic mini-batch size B_G (FedGen).
    pub synthetic_batch: usize,
    pub client_lr: f64,
    pub generator_lr: f64,
    pub generator_steps: usize,
    /// Generator inference size per training step.
    pub generator_batch: usize,
    /// Proximal coefficient μ (FedProx).
    pub proximal_mu: f64,
    /// Distillation coefficient γ (FedDistill variants).
    pub distill_gamma: f64,
    /// Diversity-loss weight λ_div (FedGen generator training).
    pub diversity_weight: f64,
    /// Weight teacher logits by per-class label counts (FedGen).
    pub weighted_teachers: bool,
    /// Server distillation steps (FedDFusion).
    pub ensemble_steps: usize,
    /// Server distillation batch size (FedDFusion).
    pub ensemble_batch: usize,
    pub sharing: SharingMode,
    pub rounds: usize,
    pub seed: u64,
    /// Accumulate label counters across rounds instead of per-round priors.
    pub cumulative_prior: bool,
    /// Iterate client data in shuffled epochs instead of sampling batches
    /// with replacement.
    pub epoch_batches: bool,
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.active_clients == 0 || self.active_clients > self.num_clients {
            return Err(Error::InvalidConfig(format!(
                "active clients must be in 1..={}, got {}",
                self.num_clients, self.active_clients
            )));
        }
        if self.local_steps == 0 {
            return Err(Error::InvalidConfig("local_steps must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be ≥ 1".into()));
        }
        if self.client_lr <= 0.0 || self.generator_lr <= 0.0 {
            return Err(Error::InvalidConfig("learning rates must be > 0".into()));
        }
        if self.sharing == SharingMode::PredictorOnly && !self.algorithm.supports_partial() {
            return Err(Error::InvalidConfig(format!(
                "{} has no predictor-only sharing variant",
                self.algorithm.name()
            )));
        }
        Ok(())
    }
}
