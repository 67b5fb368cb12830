//! Experiment orchestration: build the data and the federation from a
//! config, run rounds, and persist metrics and checkpoints.
//!
//! Output layout per run: `<out>/<run_id>/config.json`, `rounds.csv`,
//! `final.json`, and parameter blobs. `rounds.csv` is deterministic for a
//! given config and seed except for its wall-clock column.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    dirichlet_partition, load_idx, make_prototype_with, stratified_subsample, Dataset, Partition,
};
use crate::error::{Error, Result};
use crate::harness::config::{DatasetConfig, ExperimentConfig};
use crate::harness::evaluate::{evaluate_ensemble, evaluate_mean_over_models, evaluate_model};
use crate::models::{
    save_checkpoint, CheckpointMeta, Classifier, ClassifierArch, Generator, GeneratorArch,
};
use crate::protocols::{run_round, Algorithm, ClientState, ServerState, SharingMode};
use crate::rng::{derive_rng, stream};

/// One metrics row. `wall_ms` is measured time and is the one column
/// excluded from the byte-for-byte determinism guarantee.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub test_acc: f64,
    pub train_loss: f64,
    pub gen_loss: Option<f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str =
    "round,algorithm,alpha,seed,test_acc,train_loss,gen_loss,bytes_up,bytes_down,wall_ms";

/// A fully materialized experiment, ready to run.
pub struct BuiltExperiment {
    pub config: ExperimentConfig,
    pub train: Dataset,
    pub proxy: Option<Dataset>,
    pub test: Dataset,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
}

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub final_accuracy: f64,
    pub records: Vec<RoundRecord>,
    pub total_wall_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FinalReport {
    run_id: String,
    algorithm: String,
    alpha: Option<f64>,
    seed: u64,
    rounds: usize,
    final_test_acc: f64,
    total_wall_ms: u64,
}

/// Materialize datasets, partition, and initial models from a config.
pub fn build_experiment(config: &ExperimentConfig) -> Result<BuiltExperiment> {
    config.validate()?;
    let seed = config.seed;

    let (train, proxy, partition, test): (Dataset, Option<Dataset>, Partition, Dataset) =
        match &config.dataset {
            DatasetConfig::Prototype { prototype } => {
                let task = make_prototype_with(prototype, seed)?;
                (task.train, None, task.partition, task.test)
            }
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                subsample_fraction,
                proxy_fraction,
                alpha,
            } => {
                let full_train = load_idx(train_images, train_labels)?;
                let test = load_idx(test_images, test_labels)?;
                let kept = stratified_subsample(&full_train, *subsample_fraction, seed, 0);
                let kept_set = full_train.subset(&kept)?;
                let (pool, proxy) = if *proxy_fraction > 0.0 {
                    let proxy_local = stratified_subsample(&kept_set, *proxy_fraction, seed, 1);
                    let mut is_proxy = vec![false; kept_set.len()];
                    for &i in &proxy_local {
                        is_proxy[i] = true;
                    }
                    let pool_local: Vec<usize> =
                        (0..kept_set.len()).filter(|&i| !is_proxy[i]).collect();
                    (
                        kept_set.subset(&pool_local)?,
                        Some(kept_set.subset(&proxy_local)?),
                    )
                } else {
                    (kept_set, None)
                };
                let partition = dirichlet_partition(&pool, config.round.clients, *alpha, seed)?;
                (pool, proxy, partition, test)
            }
        };

    let arch = ClassifierArch {
        input_dim: train.feature_dim(),
        feature_widths: config.model.feature_widths.clone(),
        num_classes: train.num_classes(),
        hidden_activation: config.model.hidden_activation,
    };
    let global = Classifier::init(&arch, &mut derive_rng(seed, &[stream::MODEL_INIT]));

    let generator = (config.round.algorithm == Algorithm::FedGen).then(|| {
        let gen_arch = GeneratorArch {
            noise_dim: config.generator.noise_dim,
            num_classes: arch.num_classes,
            hidden_dim: config.generator.hidden_dim,
            latent_dim: arch.latent_dim(),
            leaky_slope: config.generator.leaky_slope,
        };
        Generator::init(&gen_arch, &mut derive_rng(seed, &[stream::GENERATOR_INIT]))
    });

    let server = ServerState::new(global.clone(), generator, config.round.generator_lr);
    let clients: Vec<ClientState> = partition
        .clients()
        .iter()
        .enumerate()
        .map(|(k, indices)| ClientState::new(k, indices.clone(), global.clone()))
        .collect();

    Ok(BuiltExperiment {
        config: config.clone(),
        train,
        proxy,
        test,
        server,
        clients,
    })
}

/// Accuracy of the deployed model(s) for the current algorithm and mode.
pub fn evaluate_current(
    config: &ExperimentConfig,
    server: &ServerState,
    clients: &[ClientState],
    test: &Dataset,
) -> Result<f64> {
    match (config.round.algorithm, config.round.sharing) {
        (Algorithm::FedDistill, _) => {
            let models: Vec<&Classifier> = clients.iter().map(|c| &c.model).collect();
            evaluate_mean_over_models(&models, test)
        }
        (Algorithm::FedEnsemble, _) => {
            let models: Vec<&Classifier> = clients.iter().map(|c| &c.model).collect();
            evaluate_ensemble(&models, test)
        }
        (_, SharingMode::PredictorOnly) => {
            // Each client deploys its private extractor under the shared
            // predictor.
            let mut deployed = Vec::with_capacity(clients.len());
            for client in clients {
                let mut model = client.model.clone();
                model.set_predictor(server.global.predictor().clone())?;
                deployed.push(model);
            }
            let refs: Vec<&Classifier> = deployed.iter().collect();
            evaluate_mean_over_models(&refs, test)
        }
        _ => evaluate_model(&server.global, test),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("FEDKD_THREADS") {
        let n: usize = value.parse().map_err(|_| {
            Error::InvalidConfig(format!("FEDKD_THREADS must be a positive integer, got {value}"))
        })?;
        if n == 0 {
            return Err(Error::InvalidConfig(
                "FEDKD_THREADS must be a positive integer".into(),
            ));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn format_float(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_row(config: &ExperimentConfig, record: &RoundRecord) -> String {
    let alpha = config
        .dataset
        .alpha()
        .map(|a| a.to_string())
        .unwrap_or_default();
    let gen_loss = record.gen_loss.map(format_float).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        record.round,
        config.round.algorithm.name(),
        alpha,
        config.seed,
        format_float(record.test_acc),
        format_float(record.train_loss),
        gen_loss,
        record.bytes_up,
        record.bytes_down,
        record.wall_ms
    )
}

/// Run a configured experiment to completion, writing artifacts under
/// `<out_root>/<run_id>/`.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let mut built = build_experiment(config)?;
    let run_dir = out_root.join(&config.run_id);
    fs::create_dir_all(&run_dir)?;
    fs::write(
        run_dir.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;

    let mut csv = fs::File::create(run_dir.join("rounds.csv"))?;
    writeln!(csv, "{CSV_HEADER}")?;
    csv.flush()?;

    let round_config = config.to_round_config();
    let pool = thread_pool()?;
    let mut records = Vec::new();
    let mut window_start = Instant::now();

    let result: Result<()> = pool.install(|| {
        for round in 0..config.round.rounds {
            let outcome = run_round(
                &mut built.server,
                &mut built.clients,
                &built.train,
                built.proxy.as_ref(),
                &round_config,
            )?;
            if (round + 1) % config.eval_every == 0 {
                let accuracy =
                    evaluate_current(config, &built.server, &built.clients, &built.test)?;
                let record = RoundRecord {
                    round,
                    test_acc: accuracy,
                    train_loss: outcome.mean_train_loss,
                    gen_loss: outcome.generator_loss,
                    bytes_up: outcome.bytes_up,
                    bytes_down: outcome.bytes_down,
                    wall_ms: window_start.elapsed().as_millis() as u64,
                };
                window_start = Instant::now();
                writeln!(csv, "{}", csv_row(config, &record))?;
                csv.flush()?;
                records.push(record);
            }
        }
        Ok(())
    });
    result?;

    let final_accuracy = records.last().map_or(0.0, |r| r.test_acc);
    let total_wall_ms = started.elapsed().as_millis() as u64;

    let report = FinalReport {
        run_id: config.run_id.clone(),
        algorithm: config.round.algorithm.name().to_string(),
        alpha: config.dataset.alpha(),
        seed: config.seed,
        rounds: config.round.rounds,
        final_test_acc: final_accuracy,
        total_wall_ms,
    };
    fs::write(
        run_dir.join("final.json"),
        serde_json::to_string_pretty(&report)?,
    )?;

    if config.checkpoint_final {
        let tensors = built.server.global.tensors();
        let meta = CheckpointMeta {
            kind: "classifier".into(),
            dims: tensors.iter().map(|t| t.shape().to_vec()).collect(),
            activations: vec![
                config.model.hidden_activation.name().to_string(),
                "identity".to_string(),
            ],
            seed: config.seed,
        };
        save_checkpoint(run_dir.join("global.bin"), &tensors, &meta)?;
        if let Some(generator) = &built.server.generator {
            let tensors = generator.tensors();
            let meta = CheckpointMeta {
                kind: "generator".into(),
                dims: tensors.iter().map(|t| t.shape().to_vec()).collect(),
                activations: vec!["leaky_relu".to_string(), "identity".to_string()],
                seed: config.seed,
            };
            save_checkpoint(run_dir.join("generator.bin"), &tensors, &meta)?;
        }
    }

    Ok(RunSummary {
        run_dir,
        final_accuracy,
        records,
        total_wall_ms,
    })
}

/// Parse a `final.json` written by [`run_experiment`].
pub fn read_final_accuracy(run_dir: &Path) -> Result<f64> {
    let report: FinalReport = serde_json::from_str(&fs::read_to_string(run_dir.join("final.json"))?)?;
    Ok(report.final_test_acc)
}
