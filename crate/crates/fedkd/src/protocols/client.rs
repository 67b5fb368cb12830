//! Client-side local training for every algorithm.
//!
//! One driver runs T mini-batch steps and dispatches the per-algorithm loss
//! terms. Degenerate knobs short-circuit exactly: `μ = 0` skips the proximal
//! term, `γ = 0` the logit regularizer, `B_G = 0` the synthetic batch — so
//! those configurations are bitwise identical to plain SGD, including their
//! RNG consumption.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, LabelCounter, LabelPrior};
use crate::error::Result;
use crate::models::{Classifier, Generator, LogitStats};
use crate::numerics::{softmax_cross_entropy, OptimizerKind, OptimizerState, Tensor};
use crate::protocols::Algorithm;

/// One simulated user: its slice of the training pool, its persistent local
/// model (private θ^f lives here in predictor-only mode), and the label
/// counter for the current round.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub indices: Vec<usize>,
    pub model: Classifier,
    pub counter: LabelCounter,
    epoch_order: Vec<usize>,
    epoch_cursor: usize,
}

impl ClientState {
    pub fn new(id: usize, indices: Vec<usize>, model: Classifier) -> Self {
        let classes = model.num_classes();
        ClientState {
            id,
            indices,
            model,
            counter: LabelCounter::new(classes),
            epoch_order: Vec::new(),
            epoch_cursor: 0,
        }
    }

    pub fn num_samples(&self) -> usize {
        self.indices.len()
    }

    pub(crate) fn set_epoch_state(&mut self, order: Vec<usize>, cursor: usize) {
        self.epoch_order = order;
        self.epoch_cursor = cursor;
    }
}

/// Everything a local update needs besides the client itself.
pub struct LocalContext<'a> {
    pub algorithm: Algorithm,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub proximal_mu: f64,
    pub distill_gamma: f64,
    pub synthetic_batch: usize,
    pub epoch_batches: bool,
    pub generator: Option<&'a Generator>,
    pub prior: Option<&'a LabelPrior>,
    pub global_stats: Option<&'a LogitStats>,
}

/// The parameter block a client sends back.
#[derive(Debug, Clone)]
pub enum UpdatePayload {
    Full(Vec<Tensor>),
    Predictor(Vec<Tensor>),
    None,
}

/// The server-bound message. In predictor-only mode this must never contain
/// feature-extractor bytes; [`WireUpdate::serialized`] is the audit surface.
#[derive(Debug, Clone)]
pub struct WireUpdate {
    pub client_id: usize,
    pub payload: UpdatePayload,
    pub counter: LabelCounter,
    pub stats: Option<LogitStats>,
    pub num_samples: u64,
}

impl WireUpdate {
    /// Serialize exactly what crosses the wire; used both for the
    /// communication-cost metric and the privacy audit.
    pub fn serialized(&self) -> Vec<u8> {
        use crate::models::serialize_tensors;
        let mut out = Vec::new();
        out.push(match self.payload {
            UpdatePayload::Full(_) => 1u8,
            UpdatePayload::Predictor(_) => 2,
            UpdatePayload::None => 0,
        });
        match &self.payload {
            UpdatePayload::Full(ts) | UpdatePayload::Predictor(ts) => {
                let refs: Vec<&Tensor> = ts.iter().collect();
                out.extend_from_slice(&serialize_tensors(&refs));
            }
            UpdatePayload::None => {}
        }
        for &c in self.counter.counts() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(stats) = &self.stats {
            out.extend_from_slice(&serialize_tensors(&[stats.sums()]));
            for &c in stats.counts() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.num_samples.to_le_bytes());
        out
    }
}

/// Result of one client's round, including the state to persist.
pub struct LocalOutcome {
    pub wire: WireUpdate,
    pub model: Classifier,
    pub mean_loss: f64,
    pub epoch_order: Vec<usize>,
    pub epoch_cursor: usize,
}

struct BatchSource<'a> {
    indices: &'a [usize],
    epoch: bool,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> BatchSource<'a> {
    fn new(indices: &'a [usize], epoch: bool, order: Vec<usize>, cursor: usize) -> Self {
        BatchSource {
            indices,
            epoch,
            order,
            cursor,
        }
    }

    fn draw(&mut self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if !self.epoch {
            return (0..batch)
                .map(|_| self.indices[rng.gen_range(0..self.indices.len())])
                .collect();
        }
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            if self.cursor >= self.order.len() {
                self.order = self.indices.to_vec();
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Run T local steps from `start` and build the server-bound update.
///
/// `start` is the broadcast model (or the client's own model for algorithms
/// that never share parameters); the caller decides. The generator, when
/// present, is read-only: no gradient ever flows into it here.
pub fn local_update(
    client: &ClientState,
    start: Classifier,
    data: &Dataset,
    ctx: &LocalContext,
    rng: &mut ChaCha8Rng,
    predictor_only: bool,
) -> Result<LocalOutcome> {
    let mut model = start;
    let anchor = if ctx.proximal_mu != 0.0 {
        Some(model.clone())
    } else {
        None
    };
    let mut optimizer = {
        let tensors = model.tensors();
        OptimizerState::new(OptimizerKind::Sgd { lr: ctx.lr }, &tensors)
    };
    let mut counter = LabelCounter::new(model.num_classes());
    let track_stats = matches!(
        ctx.algorithm,
        Algorithm::FedDistill | Algorithm::FedDistillPlus
    );
    let mut stats = track_stats.then(|| LogitStats::new(model.num_classes()));

    let mut source = BatchSource::new(
        &client.indices,
        ctx.epoch_batches,
        client.epoch_order.clone(),
        client.epoch_cursor,
    );

    let mut loss_sum = 0.0;
    for _ in 0..ctx.steps {
        // Fixed draw order per step: real batch, then synthetic labels, then
        // generator noise. Skipped terms consume nothing.
        let batch_indices = source.draw(ctx.batch_size, rng);
        let x = data.gather_features(&batch_indices);
        let y = data.gather_labels(&batch_indices);

        let synthetic = if ctx.algorithm == Algorithm::FedGen && ctx.synthetic_batch > 0 {
            let generator = ctx.generator.expect("fedgen requires a generator");
            let prior = ctx.prior.expect("fedgen requires a label prior");
            let labels: Vec<usize> = (0..ctx.synthetic_batch)
                .map(|_| prior.sample(rng))
                .collect();
            let (z, _eps) = generator.generate(&labels, rng)?;
            Some((z, labels))
        } else {
            None
        };

        let (_, logits, mut tape) = model.forward_train(&x)?;
        let (ce, mut dlogits, _) = softmax_cross_entropy(&logits, &y)?;
        let mut step_loss = ce;

        // Label-wise logit regularizer: γ/B · Σ_i ||g(x_i) − ḡ[y_i]||².
        if ctx.distill_gamma != 0.0 {
            if let Some(global) = ctx.global_stats.filter(|s| !s.is_empty()) {
                let inv_b = 1.0 / y.len() as f64;
                for (i, &label) in y.iter().enumerate() {
                    if let Some(target) = global.mean_for_class(label) {
                        let row_vals = logits.row(i).to_vec();
                        let drow = dlogits.row_mut(i);
                        for ((d, &v), &t) in drow.iter_mut().zip(&row_vals).zip(&target) {
                            let diff = v - t;
                            step_loss += ctx.distill_gamma * inv_b * diff * diff;
                            *d += ctx.distill_gamma * 2.0 * inv_b * diff;
                        }
                    }
                }
            }
        }

        let mut grads = model.backward(&mut tape, &dlogits)?;

        // Synthetic latent batch trains the predictor block only.
        if let Some((z, synth_labels)) = &synthetic {
            let (synth_logits, mut synth_tape) = model.predictor_forward_train(z)?;
            let (synth_ce, synth_dlogits, _) = softmax_cross_entropy(&synth_logits, synth_labels)?;
            let (dw, db) = model.predictor_backward(&mut synth_tape, &synth_dlogits)?;
            grads.predictor.0.add_scaled(&dw, 1.0)?;
            grads.predictor.1.add_scaled(&db, 1.0)?;
            step_loss += synth_ce;
        }

        // Proximal term: μ/2 · ||θ − θ_init||², gradient μ(θ − θ_init).
        if let Some(anchor) = &anchor {
            let mu = ctx.proximal_mu;
            let current = model.tensors();
            let init = anchor.tensors();
            let mut grad_slots = grads.tensors_mut();
            for ((g, c), a) in grad_slots.iter_mut().zip(&current).zip(&init) {
                step_loss += 0.5 * mu * c.squared_distance(a)?;
                for ((gv, &cv), &av) in g.data_mut().iter_mut().zip(c.data()).zip(a.data()) {
                    *gv += mu * (cv - av);
                }
            }
        }

        if let Some(stats) = stats.as_mut() {
            stats.update(&logits, &y)?;
        }
        counter.record_batch(&y);

        let grad_tensors: Vec<&Tensor> = grads.tensors();
        let mut params = model.tensors_mut();
        optimizer.step(&mut params, &grad_tensors)?;
        loss_sum += step_loss;
    }

    let payload = if !ctx.algorithm.shares_parameters() {
        UpdatePayload::None
    } else if predictor_only {
        UpdatePayload::Predictor(model.predictor_tensors().into_iter().cloned().collect())
    } else {
        UpdatePayload::Full(model.tensors().into_iter().cloned().collect())
    };

    Ok(LocalOutcome {
        wire: WireUpdate {
            client_id: client.id,
            payload,
            counter: counter.clone(),
            stats,
            num_samples: counter.total(),
        },
        model,
        mean_loss: loss_sum / ctx.steps as f64,
        epoch_order: source.order,
        epoch_cursor: source.cursor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_prototype;
    use crate::models::ClassifierArch;
    use crate::numerics::Activation;
    use crate::rng::{derive_rng, stream};

    fn setup() -> (Dataset, Vec<usize>, Classifier) {
        let task = make_prototype(5, 60).unwrap();
        let arch = ClassifierArch {
            input_dim: 2,
            feature_widths: vec![8, 4],
            num_classes: 3,
            hidden_activation: Activation::Relu,
        };
        let model = Classifier::init(&arch, &mut derive_rng(5, &[stream::MODEL_INIT]));
        let indices = task.partition.client(0).to_vec();
        (task.train, indices, model)
    }

    fn ctx<'a>(algorithm: Algorithm) -> LocalContext<'a> {
        LocalContext {
            algorithm,
            steps: 10,
            batch_size: 8,
            lr: 0.05,
            proximal_mu: 0.0,
            distill_gamma: 0.0,
            synthetic_batch: 0,
            epoch_batches: false,
            generator: None,
            prior: None,
            global_stats: None,
        }
    }

    fn run(algorithm: Algorithm, mu: f64) -> Classifier {
        let (data, indices, model) = setup();
        let client = ClientState::new(0, indices, model.clone());
        let mut context = ctx(algorithm);
        context.proximal_mu = mu;
        let mut rng = derive_rng(9, &[stream::CLIENT, 0, 0]);
        local_update(&client, model, &data, &context, &mut rng, false)
            .unwrap()
            .model
    }

    #[test]
    fn fedprox_with_zero_mu_matches_fedavg_bitwise() {
        let avg = run(Algorithm::FedAvg, 0.0);
        let prox = run(Algorithm::FedProx, 0.0);
        for (a, b) in avg.tensors().iter().zip(prox.tensors()) {
            assert!(a.bit_eq(b));
        }
    }

    #[test]
    fn fedprox_large_mu_contracts_toward_anchor() {
        let (data, indices, model) = setup();
        let client = ClientState::new(0, indices, model.clone());
        let mut free = ctx(Algorithm::FedProx);
        free.proximal_mu = 0.0;
        let mut tight = ctx(Algorithm::FedProx);
        tight.proximal_mu = 100.0;

        let run_with = |context: &LocalContext| {
            let mut rng = derive_rng(9, &[stream::CLIENT, 0, 0]);
            local_update(&client, model.clone(), &data, context, &mut rng, false)
                .unwrap()
                .model
        };
        let loose_model = run_with(&free);
        let tight_model = run_with(&tight);
        let dist = |m: &Classifier| -> f64 {
            m.tensors()
                .iter()
                .zip(model.tensors())
                .map(|(a, b)| a.squared_distance(b).unwrap())
                .sum()
        };
        assert!(dist(&tight_model) < dist(&loose_model));
    }

    #[test]
    fn feddistill_regularizer_anchors_at_target_means() {
        // One distinct sample per class: each class mean equals that
        // sample's own logits, so the penalty and its gradient are exactly
        // zero on the first step and γ=0.1 matches γ=0 bitwise.
        let features = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![-0.5, 1.0],
            vec![0.3, -1.2],
        ])
        .unwrap();
        let data = Dataset::new(features, vec![0, 1, 2], 3).unwrap();
        let arch = ClassifierArch {
            input_dim: 2,
            feature_widths: vec![4],
            num_classes: 3,
            hidden_activation: Activation::Relu,
        };
        let model = Classifier::init(&arch, &mut derive_rng(4, &[stream::MODEL_INIT]));
        let all: Vec<usize> = vec![0, 1, 2];
        let (_, logits, _) = model.classify(&data.gather_features(&all)).unwrap();
        let mut stats = LogitStats::new(3);
        stats.update(&logits, data.labels()).unwrap();

        let client = ClientState::new(0, all, model.clone());
        let run = |gamma: f64| {
            let mut context = ctx(Algorithm::FedDistillPlus);
            context.steps = 1;
            context.batch_size = 6;
            context.distill_gamma = gamma;
            context.global_stats = Some(&stats);
            let mut rng = derive_rng(9, &[stream::CLIENT, 0, 0]);
            local_update(&client, model.clone(), &data, &context, &mut rng, false)
                .unwrap()
                .model
        };
        let with_reg = run(0.1);
        let without = run(0.0);
        for (a, b) in with_reg.tensors().iter().zip(without.tensors()) {
            assert!(a.bit_eq(b));
        }
    }

    #[test]
    fn epoch_mode_visits_every_sample_before_repeats() {
        let (data, indices, model) = setup();
        let n = indices.len();
        let client = ClientState::new(0, indices.clone(), model.clone());
        let mut context = ctx(Algorithm::FedAvg);
        context.epoch_batches = true;
        context.steps = 1;
        context.batch_size = n;
        let mut rng = derive_rng(9, &[stream::CLIENT, 0, 0]);
        let outcome = local_update(&client, model, &data, &context, &mut rng, false).unwrap();
        // One full epoch: every index drawn exactly once.
        assert_eq!(outcome.epoch_cursor, n);
        let mut sorted = outcome.epoch_order.clone();
        sorted.sort_unstable();
        let mut expected = indices;
        expected.sort_unstable();
        assert_eq!(sorted, expected);
    }
}
