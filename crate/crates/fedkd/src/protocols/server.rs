//! Server state and the per-round protocol driver.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{aggregate_prior, Dataset, LabelCounter, LabelPrior};
use crate::error::{Error, Result};
use crate::models::{average_predictors, serialize_tensors, Classifier, Generator, LogitStats};
use crate::numerics::{OptimizerKind, OptimizerState, Tensor};
use crate::protocols::client::{local_update, ClientState, LocalContext, LocalOutcome, UpdatePayload};
use crate::protocols::generator_training::{train_generator, TeacherPredictor};
use crate::protocols::{fusion, Algorithm, RoundConfig, SharingMode};
use crate::rng::{derive_rng, stream};

/// Server-side state carried across rounds.
pub struct ServerState {
    pub round: usize,
    pub global: Classifier,
    pub generator: Option<Generator>,
    pub generator_opt: Option<OptimizerState>,
    /// Empirical label prior p̂(y); uniform at initialization.
    pub prior: LabelPrior,
    /// Logit statistics broadcast to clients (one round stale).
    pub broadcast_stats: LogitStats,
    /// Cumulative label counters (only used in cumulative-prior mode).
    cumulative_counter: LabelCounter,
}

impl ServerState {
    pub fn new(global: Classifier, generator: Option<Generator>, generator_lr: f64) -> Self {
        let classes = global.num_classes();
        let generator_opt = generator
            .as_ref()
            .map(|g| OptimizerState::new(OptimizerKind::adam(generator_lr), &g.tensors()));
        ServerState {
            round: 0,
            global,
            generator,
            generator_opt,
            prior: LabelPrior::uniform(classes),
            broadcast_stats: LogitStats::new(classes),
            cumulative_counter: LabelCounter::new(classes),
        }
    }
}

/// Uniform sample of `count` distinct client ids, ascending.
pub fn sample_active_users(total: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if count == 0 || count > total {
        return Err(Error::InvalidConfig(format!(
            "cannot sample {count} of {total} clients"
        )));
    }
    let mut ids: Vec<usize> = (0..total).collect();
    // Partial Fisher–Yates: the first `count` entries are a uniform sample
    // without replacement.
    for i in 0..count {
        let j = i + (rng.next_u64() as usize) % (total - i);
        ids.swap(i, j);
    }
    let mut active = ids[..count].to_vec();
    active.sort_unstable();
    Ok(active)
}

use rand_chacha::rand_core::RngCore;

/// Metrics from one protocol round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    pub active: Vec<usize>,
    pub mean_train_loss: f64,
    pub generator_loss: Option<f64>,
    pub fusion_loss: Option<f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

fn params_bytes(tensors: &[&Tensor]) -> u64 {
    serialize_tensors(tensors).len() as u64
}

fn stats_bytes(stats: &LogitStats) -> u64 {
    serialize_tensors(&[stats.sums()]).len() as u64 + stats.counts().len() as u64 * 8
}

fn prior_bytes(prior: &LabelPrior) -> u64 {
    prior.probs().len() as u64 * 8
}

/// Bytes the server sends to one active client this round.
fn broadcast_bytes(server: &ServerState, cfg: &RoundConfig) -> u64 {
    let mut bytes = 0;
    if cfg.algorithm.shares_parameters() {
        bytes += match cfg.sharing {
            SharingMode::Full => params_bytes(&server.global.tensors()),
            SharingMode::PredictorOnly => params_bytes(&server.global.predictor_tensors()),
        };
    }
    match cfg.algorithm {
        Algorithm::FedGen => {
            if let Some(generator) = &server.generator {
                bytes += params_bytes(&generator.tensors());
            }
            bytes += prior_bytes(&server.prior);
        }
        Algorithm::FedDistill | Algorithm::FedDistillPlus => {
            bytes += stats_bytes(&server.broadcast_stats);
        }
        _ => {}
    }
    bytes
}

/// Run one communication round: sample users, broadcast, local updates in
/// parallel, aggregate in ascending id order, then server-side learning.
///
/// `proxy` is only consulted by the ensemble-distillation algorithm.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut [ClientState],
    data: &Dataset,
    proxy: Option<&Dataset>,
    cfg: &RoundConfig,
) -> Result<RoundOutcome> {
    cfg.validate()?;
    let round = server.round;
    let mut server_rng = derive_rng(cfg.seed, &[stream::SERVER_ROUND, round as u64]);
    let active = sample_active_users(cfg.num_clients, cfg.active_clients, &mut server_rng)?;

    let predictor_only = cfg.sharing == SharingMode::PredictorOnly;
    let per_client_down = broadcast_bytes(server, cfg);

    // Snapshot broadcast state once; every client sees the same values.
    let generator = server.generator.clone();
    let prior = server.prior.clone();
    let global_stats = server.broadcast_stats.clone();

    let ctx = LocalContext {
        algorithm: cfg.algorithm,
        steps: cfg.local_steps,
        batch_size: cfg.batch_size,
        lr: cfg.client_lr,
        proximal_mu: if cfg.algorithm == Algorithm::FedProx {
            cfg.proximal_mu
        } else {
            0.0
        },
        distill_gamma: if matches!(
            cfg.algorithm,
            Algorithm::FedDistill | Algorithm::FedDistillPlus
        ) {
            cfg.distill_gamma
        } else {
            0.0
        },
        synthetic_batch: if cfg.algorithm == Algorithm::FedGen {
            cfg.synthetic_batch
        } else {
            0
        },
        epoch_batches: cfg.epoch_batches,
        generator: generator.as_ref(),
        prior: Some(&prior),
        global_stats: Some(&global_stats),
    };

    // Local updates are independent; run them in parallel and collect in
    // active-id order (par_iter preserves ordering).
    let outcomes: Vec<(usize, Option<Result<LocalOutcome>>)> = active
        .par_iter()
        .map(|&id| {
            let client = &clients[id];
            if client.indices.is_empty() {
                return (id, None);
            }
            let start = if !cfg.algorithm.shares_parameters() {
                client.model.clone()
            } else if predictor_only {
                let mut model = client.model.clone();
                match model.set_predictor(server.global.predictor().clone()) {
                    Ok(()) => model,
                    Err(e) => return (id, Some(Err(e))),
                }
            } else {
                server.global.clone()
            };
            let mut rng = derive_rng(cfg.seed, &[stream::CLIENT, id as u64, round as u64]);
            let result = local_update(client, start, data, &ctx, &mut rng, predictor_only);
            (id, Some(result))
        })
        .collect();

    // Persist client state and gather wire updates, ascending id order.
    let mut wires = Vec::new();
    let mut bytes_up = 0u64;
    let mut loss_sum = 0.0;
    for (id, outcome) in outcomes {
        match outcome {
            None => {
                eprintln!("warning: client {id} has no data; skipped in round {round}");
            }
            Some(result) => {
                let outcome = result?;
                bytes_up += outcome.wire.serialized().len() as u64;
                loss_sum += outcome.mean_loss;
                let client = &mut clients[id];
                client.model = outcome.model;
                client.counter = outcome.wire.counter.clone();
                client.set_epoch_state(outcome.epoch_order, outcome.epoch_cursor);
                wires.push(outcome.wire);
            }
        }
    }
    if wires.is_empty() {
        return Err(Error::AllClientsSkipped { round });
    }
    let bytes_down = per_client_down * active.len() as u64;
    let mean_train_loss = loss_sum / wires.len() as f64;

    aggregate_round(server, &wires, cfg)?;

    // Server-side learning phases.
    let mut generator_loss = None;
    if cfg.algorithm == Algorithm::FedGen {
        let teachers: Vec<TeacherPredictor> = wires
            .iter()
            .filter_map(|w| {
                let predictor = match &w.payload {
                    UpdatePayload::Full(_) => Some(clients[w.client_id].model.predictor()),
                    UpdatePayload::Predictor(_) => Some(clients[w.client_id].model.predictor()),
                    UpdatePayload::None => None,
                };
                predictor.map(|p| TeacherPredictor {
                    predictor: p,
                    counter: &w.counter,
                })
            })
            .collect();
        let generator = server
            .generator
            .as_mut()
            .ok_or_else(|| Error::InvalidConfig("fedgen requires a generator".into()))?;
        let optimizer = server.generator_opt.as_mut().expect("generator optimizer");
        let mut rng = derive_rng(cfg.seed, &[stream::GENERATOR_TRAIN, round as u64]);
        let loss = train_generator(
            generator,
            optimizer,
            &teachers,
            &server.prior,
            cfg.generator_steps,
            cfg.generator_batch,
            cfg.diversity_weight,
            cfg.weighted_teachers,
            &mut rng,
        )?;
        generator_loss = Some(loss);
    }

    let mut fusion_loss = None;
    if cfg.algorithm == Algorithm::FedDFusion {
        let proxy = proxy.ok_or_else(|| {
            Error::InvalidConfig("feddfusion requires a proxy dataset".into())
        })?;
        let teachers: Vec<&Classifier> = wires
            .iter()
            .map(|w| &clients[w.client_id].model)
            .collect();
        let mut optimizer = OptimizerState::new(
            OptimizerKind::adam(cfg.generator_lr),
            &server.global.tensors(),
        );
        let mut rng = derive_rng(cfg.seed, &[stream::FUSION, round as u64]);
        let loss = fusion::server_distill_fusion(
            &mut server.global,
            &mut optimizer,
            &teachers,
            proxy,
            cfg.ensemble_steps,
            cfg.ensemble_batch,
            &mut rng,
        )?;
        fusion_loss = Some(loss);
    }

    server.round += 1;
    Ok(RoundOutcome {
        round,
        active,
        mean_train_loss,
        generator_loss,
        fusion_loss,
        bytes_up,
        bytes_down,
    })
}

/// Fold the round's wire updates into the server: parameter averaging (per
/// sharing mode), the label prior, and next round's logit statistics.
pub fn aggregate_round(
    server: &mut ServerState,
    wires: &[crate::protocols::client::WireUpdate],
    cfg: &RoundConfig,
) -> Result<()> {
    // Updates arrive sorted by client id; sort again so external callers
    // cannot perturb the floating-point accumulation order.
    let mut order: Vec<usize> = (0..wires.len()).collect();
    order.sort_by_key(|&i| wires[i].client_id);

    if cfg.algorithm.shares_parameters() {
        match cfg.sharing {
            SharingMode::Full => {
                let mut models = Vec::with_capacity(order.len());
                for &i in &order {
                    if let UpdatePayload::Full(tensors) = &wires[i].payload {
                        let mut model = server.global.clone();
                        model.set_tensors(tensors)?;
                        models.push(model);
                    } else {
                        return Err(Error::InvalidConfig(
                            "expected full parameter payloads".into(),
                        ));
                    }
                }
                let refs: Vec<&Classifier> = models.iter().collect();
                server.global = Classifier::average(&refs)?;
            }
            SharingMode::PredictorOnly => {
                let mut layers = Vec::with_capacity(order.len());
                for &i in &order {
                    if let UpdatePayload::Predictor(tensors) = &wires[i].payload {
                        let mut layer = server.global.predictor().clone();
                        if tensors.len() != 2 {
                            return Err(Error::InvalidConfig(
                                "predictor payload must be weights + bias".into(),
                            ));
                        }
                        layer.weights = tensors[0].clone();
                        layer.bias = tensors[1].clone();
                        layers.push(layer);
                    } else {
                        return Err(Error::InvalidConfig(
                            "expected predictor-only payloads".into(),
                        ));
                    }
                }
                let refs: Vec<&crate::numerics::DenseLayer> = layers.iter().collect();
                server.global.set_predictor(average_predictors(&refs)?)?;
            }
        }
    }

    // p̂(y) from the round's counters (or cumulative when configured).
    let counters: Vec<&LabelCounter> = order.iter().map(|&i| &wires[i].counter).collect();
    if cfg.cumulative_prior {
        for counter in &counters {
            server.cumulative_counter.merge(counter);
        }
        if server.cumulative_counter.total() > 0 {
            server.prior = aggregate_prior(&[&server.cumulative_counter])?;
        }
    } else if counters.iter().any(|c| c.total() > 0) {
        server.prior = aggregate_prior(&counters)?;
    }

    // Merge this round's logit statistics for next round's broadcast.
    if matches!(
        cfg.algorithm,
        Algorithm::FedDistill | Algorithm::FedDistillPlus
    ) {
        let mut merged = LogitStats::new(server.global.num_classes());
        for &i in &order {
            if let Some(stats) = &wires[i].stats {
                merged.merge(stats)?;
            }
        }
        server.broadcast_stats = merged;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ClassifierArch;
    use crate::numerics::Activation;

    #[test]
    fn sampling_all_clients_is_exhaustive() {
        let mut rng = derive_rng(1, &[stream::SERVER_ROUND, 0]);
        let ids = sample_active_users(6, 6, &mut rng).unwrap();
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn sampling_is_deterministic_and_validated() {
        let a = sample_active_users(20, 10, &mut derive_rng(2, &[stream::SERVER_ROUND, 3])).unwrap();
        let b = sample_active_users(20, 10, &mut derive_rng(2, &[stream::SERVER_ROUND, 3])).unwrap();
        assert_eq!(a, b);
        assert!(sample_active_users(5, 6, &mut derive_rng(2, &[0])).is_err());
        assert!(sample_active_users(5, 0, &mut derive_rng(2, &[0])).is_err());
    }

    #[test]
    fn selection_frequency_is_uniform() {
        let mut counts = vec![0u32; 20];
        for trial in 0..10_000u64 {
            let ids =
                sample_active_users(20, 10, &mut derive_rng(7, &[stream::SERVER_ROUND, trial]))
                    .unwrap();
            for id in ids {
                counts[id] += 1;
            }
        }
        for &c in &counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let arch = ClassifierArch {
            input_dim: 2,
            feature_widths: vec![3],
            num_classes: 2,
            hidden_activation: Activation::Relu,
        };
        let base = Classifier::init(&arch, &mut derive_rng(3, &[stream::MODEL_INIT]));
        let make_wire = |id: usize, fill: f64| {
            let mut model = base.clone();
            for t in model.tensors_mut() {
                t.data_mut().fill(fill);
            }
            crate::protocols::client::WireUpdate {
                client_id: id,
                payload: UpdatePayload::Full(model.tensors().into_iter().cloned().collect()),
                counter: crate::data::count_labels(&[0, 1], 2).unwrap(),
                stats: None,
                num_samples: 2,
            }
        };
        let cfg = RoundConfig {
            algorithm: Algorithm::FedAvg,
            num_clients: 3,
            active_clients: 3,
            local_steps: 1,
            batch_size: 1,
            synthetic_batch: 0,
            client_lr: 0.1,
            generator_lr: 1e-4,
            generator_steps: 0,
            generator_batch: 1,
            proximal_mu: 0.0,
            distill_gamma: 0.0,
            diversity_weight: 1.0,
            weighted_teachers: true,
            ensemble_steps: 0,
            ensemble_batch: 1,
            sharing: SharingMode::Full,
            rounds: 1,
            seed: 0,
            cumulative_prior: false,
            epoch_batches: false,
        };
        let wires_a = vec![make_wire(0, 0.0), make_wire(1, 1.0), make_wire(2, 2.0)];
        let wires_b = vec![make_wire(2, 2.0), make_wire(0, 0.0), make_wire(1, 1.0)];

        let mut server_a = ServerState::new(base.clone(), None, 1e-4);
        aggregate_round(&mut server_a, &wires_a, &cfg).unwrap();
        let mut server_b = ServerState::new(base.clone(), None, 1e-4);
        aggregate_round(&mut server_b, &wires_b, &cfg).unwrap();
        for (a, b) in server_a.global.tensors().iter().zip(server_b.global.tensors()) {
            assert!(a.bit_eq(b));
            assert!(a.data().iter().all(|&v| v == 1.0));
        }
    }
}
