//! The one-shot prototype distillation experiment.
//!
//! Three clients pretrain locally from a shared initialization, the server
//! learns a generator from their (frozen) predictors, and each client then
//! continues training on its own data plus generator samples. The report
//! carries per-user accuracy before and after, the parameter-averaged
//! model's accuracy, and a pooled-data oracle — the desk-scale boundary-bias
//! story in numbers.

use serde::{Deserialize, Serialize};

use crate::data::{aggregate_prior, make_prototype_with, PrototypeConfig};
use crate::error::Result;
use crate::harness::evaluate::evaluate_model;
use crate::models::{Classifier, ClassifierArch, Generator, GeneratorArch};
use crate::numerics::{Activation, OptimizerKind, OptimizerState};
use crate::protocols::{
    local_update, train_generator, Algorithm, ClientState, LocalContext, TeacherPredictor,
};
use crate::rng::{derive_rng, stream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeKdConfig {
    pub prototype: PrototypeConfig,
    /// Feature-extractor widths; empty means the generator works on the raw
    /// 2-D input space, which is how the desk-scale experiment is run.
    pub feature_widths: Vec<usize>,
    pub pretrain_steps: usize,
    pub distill_steps: usize,
    pub batch_size: usize,
    pub synthetic_batch: usize,
    pub lr: f64,
    pub generator_steps: usize,
    pub generator_batch: usize,
    pub generator_lr: f64,
    pub diversity_weight: f64,
    pub noise_dim: usize,
    pub hidden_dim: usize,
}

impl Default for PrototypeKdConfig {
    fn default() -> Self {
        PrototypeKdConfig {
            prototype: PrototypeConfig::default(),
            feature_widths: vec![],
            pretrain_steps: 400,
            distill_steps: 400,
            batch_size: 32,
            synthetic_batch: 32,
            lr: 0.05,
            generator_steps: 1000,
            generator_batch: 128,
            generator_lr: 1e-3,
            diversity_weight: 1.0,
            noise_dim: 32,
            hidden_dim: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeKdReport {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub averaged: f64,
    pub oracle: f64,
    pub generator_loss: f64,
}

/// Mean cross-entropy of one predictor on fresh generator samples drawn from
/// the prior. Lower means the user's predictor agrees better with the
/// distilled feature distribution.
pub fn predictor_ce_on_generator(
    model: &Classifier,
    generator: &Generator,
    prior: &crate::data::LabelPrior,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    use crate::numerics::softmax_cross_entropy;
    let mut rng = derive_rng(seed, &[stream::GENERATOR_TRAIN, u64::MAX]);
    let labels: Vec<usize> = (0..samples).map(|_| prior.sample(&mut rng)).collect();
    let (z, _) = generator.generate(&labels, &mut rng)?;
    let (logits, _) = model.predict_from_latent(&z)?;
    Ok(softmax_cross_entropy(&logits, &labels)?.0)
}

pub fn run_prototype_kd(config: &PrototypeKdConfig, seed: u64) -> Result<PrototypeKdReport> {
    let task = make_prototype_with(&config.prototype, seed)?;
    let arch = ClassifierArch {
        input_dim: 2,
        feature_widths: config.feature_widths.clone(),
        num_classes: 3,
        hidden_activation: Activation::Relu,
    };
    let init = Classifier::init(&arch, &mut derive_rng(seed, &[stream::MODEL_INIT]));

    // Phase 1: local pretraining from the shared initialization.
    let clients: Vec<ClientState> = (0..3)
        .map(|k| ClientState::new(k, task.partition.client(k).to_vec(), init.clone()))
        .collect();
    let pretrain_ctx = LocalContext {
        algorithm: Algorithm::FedAvg,
        steps: config.pretrain_steps,
        batch_size: config.batch_size,
        lr: config.lr,
        proximal_mu: 0.0,
        distill_gamma: 0.0,
        synthetic_batch: 0,
        epoch_batches: false,
        generator: None,
        prior: None,
        global_stats: None,
    };
    let mut local_models = Vec::with_capacity(3);
    let mut counters = Vec::with_capacity(3);
    for client in &clients {
        let mut rng = derive_rng(seed, &[stream::CLIENT, client.id as u64, 0]);
        let outcome = local_update(client, init.clone(), &task.train, &pretrain_ctx, &mut rng, false)?;
        counters.push(outcome.wire.counter.clone());
        local_models.push(outcome.model);
    }
    let before: Vec<f64> = local_models
        .iter()
        .map(|m| evaluate_model(m, &task.test))
        .collect::<Result<_>>()?;

    // Parameter-averaged global model, for the no-distillation comparison.
    let refs: Vec<&Classifier> = local_models.iter().collect();
    let averaged_model = Classifier::average(&refs)?;
    let averaged = evaluate_model(&averaged_model, &task.test)?;

    // Oracle: the same architecture and budget trained on the pooled data.
    let oracle_model = {
        let all: Vec<usize> = (0..task.train.len()).collect();
        let oracle_client = ClientState::new(0, all, init.clone());
        let mut rng = derive_rng(seed.wrapping_add(101), &[stream::CLIENT, 0, 0]);
        let ctx = LocalContext {
            steps: config.pretrain_steps + config.distill_steps,
            ..pretrain_ctx
        };
        local_update(&oracle_client, init.clone(), &task.train, &ctx, &mut rng, false)?.model
    };
    let oracle = evaluate_model(&oracle_model, &task.test)?;

    // Phase 2: the server learns the generator from the frozen predictors,
    // with per-class count weighting.
    let prior = {
        let counter_refs: Vec<&_> = counters.iter().collect();
        aggregate_prior(&counter_refs)?
    };
    let gen_arch = GeneratorArch {
        noise_dim: config.noise_dim,
        num_classes: 3,
        hidden_dim: config.hidden_dim,
        latent_dim: arch.latent_dim(),
        leaky_slope: 0.2,
    };
    let mut generator = Generator::init(&gen_arch, &mut derive_rng(seed, &[stream::GENERATOR_INIT]));
    let mut gen_opt = OptimizerState::new(OptimizerKind::adam(config.generator_lr), &generator.tensors());
    let teachers: Vec<TeacherPredictor> = local_models
        .iter()
        .zip(&counters)
        .map(|(m, c)| TeacherPredictor {
            predictor: m.predictor(),
            counter: c,
        })
        .collect();
    let generator_loss = train_generator(
        &mut generator,
        &mut gen_opt,
        &teachers,
        &prior,
        config.generator_steps,
        config.generator_batch,
        config.diversity_weight,
        true,
        &mut derive_rng(seed, &[stream::GENERATOR_TRAIN, 0]),
    )?;

    // Phase 3: each user keeps its own model and continues training on real
    // batches plus generator samples.
    let distill_ctx = LocalContext {
        algorithm: Algorithm::FedGen,
        steps: config.distill_steps,
        synthetic_batch: config.synthetic_batch,
        generator: Some(&generator),
        prior: Some(&prior),
        ..pretrain_ctx
    };
    let mut after = Vec::with_capacity(3);
    for (client, model) in clients.iter().zip(&local_models) {
        let mut rng = derive_rng(seed, &[stream::CLIENT, client.id as u64, 1]);
        let outcome = local_update(client, model.clone(), &task.train, &distill_ctx, &mut rng, false)?;
        after.push(evaluate_model(&outcome.model, &task.test)?);
    }

    Ok(PrototypeKdReport {
        before,
        after,
        averaged,
        oracle,
        generator_loss,
    })
}
