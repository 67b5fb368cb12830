//! Experiment configuration: a flat JSON document whose defaults reproduce
//! the reference hyperparameter table, so an empty override block runs the
//! standard setting.

use serde::{Deserialize, Serialize};

use crate::data::PrototypeConfig;
use crate::error::{Error, Result};
use crate::numerics::Activation;
use crate::protocols::{Algorithm, RoundConfig, SharingMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// The synthetic 2-D three-cluster task with its fixed 3-client skew.
    Prototype {
        #[serde(default)]
        prototype: PrototypeConfig,
    },
    /// IDX image/label files, class-stratified subsampling, and a Dirichlet
    /// partition over the clients.
    Idx {
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
        /// Fraction of the training file kept (class-stratified).
        #[serde(default = "default_subsample")]
        subsample_fraction: f64,
        /// Fraction of the kept pool carved off as the unlabeled proxy set
        /// (never assigned to clients; used by ensemble distillation).
        #[serde(default)]
        proxy_fraction: f64,
        /// Dirichlet concentration α for the client partition.
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

fn default_subsample() -> f64 {
    0.5
}

fn default_alpha() -> f64 {
    1.0
}

impl DatasetConfig {
    pub fn alpha(&self) -> Option<f64> {
        match self {
            DatasetConfig::Prototype { .. } => None,
            DatasetConfig::Idx { alpha, .. } => Some(*alpha),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Widths of the feature-extractor layers; the last is the latent dim.
    pub feature_widths: Vec<usize>,
    pub hidden_activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_widths: vec![784, 32],
            hidden_activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub noise_dim: usize,
    pub hidden_dim: usize,
    pub leaky_slope: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            noise_dim: 32,
            hidden_dim: 256,
            leaky_slope: 0.2,
        }
    }
}

/// Round-level knobs; field meanings match [`RoundConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundParams {
    pub algorithm: Algorithm,
    pub clients: usize,
    pub active_clients: usize,
    pub local_steps: usize,
    pub batch_size: usize,
    pub synthetic_batch: usize,
    pub client_lr: f64,
    pub generator_lr: f64,
    pub generator_steps: usize,
    pub generator_batch: usize,
    pub proximal_mu: f64,
    pub distill_gamma: f64,
    pub diversity_weight: f64,
    pub weighted_teachers: bool,
    pub ensemble_steps: usize,
    pub ensemble_batch: usize,
    pub sharing: SharingMode,
    pub rounds: usize,
    pub cumulative_prior: bool,
    pub epoch_batches: bool,
}

impl Default for RoundParams {
    fn default() -> Self {
        RoundParams {
            algorithm: Algorithm::FedAvg,
            clients: 20,
            active_clients: 10,
            local_steps: 20,
            batch_size: 32,
            synthetic_batch: 32,
            client_lr: 0.01,
            generator_lr: 1e-4,
            generator_steps: 20,
            generator_batch: 128,
            proximal_mu: 0.1,
            distill_gamma: 0.1,
            diversity_weight: 1.0,
            weighted_teachers: true,
            ensemble_steps: 20,
            ensemble_batch: 128,
            sharing: SharingMode::Full,
            rounds: 200,
            cumulative_prior: false,
            epoch_batches: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run_id: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub round: RoundParams,
    /// Evaluate every N rounds (default: every round).
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Write final parameter blobs next to the metrics.
    #[serde(default = "default_true")]
    pub checkpoint_final: bool,
}

fn default_eval_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_round_config(&self) -> RoundConfig {
        RoundConfig {
            algorithm: self.round.algorithm,
            num_clients: self.round.clients,
            active_clients: self.round.active_clients,
            local_steps: self.round.local_steps,
            batch_size: self.round.batch_size,
            synthetic_batch: self.round.synthetic_batch,
            client_lr: self.round.client_lr,
            generator_lr: self.round.generator_lr,
            generator_steps: self.round.generator_steps,
            generator_batch: self.round.generator_batch,
            proximal_mu: self.round.proximal_mu,
            distill_gamma: self.round.distill_gamma,
            diversity_weight: self.round.diversity_weight,
            weighted_teachers: self.round.weighted_teachers,
            ensemble_steps: self.round.ensemble_steps,
            ensemble_batch: self.round.ensemble_batch,
            sharing: self.round.sharing,
            rounds: self.round.rounds,
            seed: self.seed,
            cumulative_prior: self.round.cumulative_prior,
            epoch_batches: self.round.epoch_batches,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::InvalidConfig("run_id must be non-empty".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be ≥ 1".into()));
        }
        if self.round.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be ≥ 1".into()));
        }
        self.to_round_config().validate()?;
        match &self.dataset {
            DatasetConfig::Prototype { .. } => {
                if self.round.clients != 3 {
                    return Err(Error::InvalidConfig(format!(
                        "the prototype task has exactly 3 clients, got {}",
                        self.round.clients
                    )));
                }
            }
            DatasetConfig::Idx {
                subsample_fraction,
                proxy_fraction,
                alpha,
                ..
            } => {
                if !(*subsample_fraction > 0.0 && *subsample_fraction <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "subsample_fraction must be in (0, 1], got {subsample_fraction}"
                    )));
                }
                if !(0.0..1.0).contains(proxy_fraction) {
                    return Err(Error::InvalidConfig(format!(
                        "proxy_fraction must be in [0, 1), got {proxy_fraction}"
                    )));
                }
                if *alpha <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "alpha must be > 0, got {alpha}"
                    )));
                }
            }
        }
        if self.round.algorithm == Algorithm::FedDFusion {
            match &self.dataset {
                DatasetConfig::Idx { proxy_fraction, .. } if *proxy_fraction > 0.0 => {}
                _ => {
                    return Err(Error::InvalidConfig(
                        "feddfusion requires an idx dataset with proxy_fraction > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_override_block_gives_reference_defaults() {
        let config = ExperimentConfig::from_json(
            r#"{"run_id": "t", "dataset": {"kind": "prototype"}, "round": {"clients": 3, "active_clients": 3}}"#,
        )
        .unwrap();
        assert_eq!(config.round.local_steps, 20);
        assert_eq!(config.round.batch_size, 32);
        assert_eq!(config.round.rounds, 200);
        assert_eq!(config.round.client_lr, 0.01);
        assert_eq!(config.round.generator_lr, 1e-4);
        assert_eq!(config.round.generator_batch, 128);
        assert_eq!(config.round.proximal_mu, 0.1);
        assert_eq!(config.round.distill_gamma, 0.1);
        assert_eq!(config.eval_every, 1);
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = ExperimentConfig::from_json(
            r#"{"run_id": "t", "seed": 9, "dataset": {"kind": "prototype"}, "round": {"clients": 3, "active_clients": 3, "algorithm": "fedgen"}}"#,
        )
        .unwrap();
        assert_eq!(config.round.algorithm, Algorithm::FedGen);
        let json = serde_json::to_string(&config).unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.round.algorithm, Algorithm::FedGen);
    }

    #[test]
    fn prototype_requires_three_clients() {
        let config = ExperimentConfig::from_json(
            r#"{"run_id": "t", "dataset": {"kind": "prototype"}}"#,
        );
        assert!(config.is_err());
    }
}
