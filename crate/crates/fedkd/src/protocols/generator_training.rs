//! Server-side generator training.
//!
//! The generator learns to emit latent samples that the frozen teacher
//! predictors classify as the requested label: each step samples labels from
//! the empirical prior, generates latents, and minimizes cross-entropy of
//! the (optionally count-weighted) teacher logit ensemble, plus the
//! diversity regularizer. Gradients flow into the generator only.

use rand_chacha::ChaCha8Rng;

use crate::data::{LabelCounter, LabelPrior};
use crate::error::{Error, Result};
use crate::models::{diversity_loss, Generator};
use crate::numerics::{softmax_cross_entropy, DenseLayer, OptimizerState, Tensor};

/// A frozen teacher: one client's predictor block and its round label
/// counts (used by the weighted ensemble).
pub struct TeacherPredictor<'a> {
    pub predictor: &'a DenseLayer,
    pub counter: &'a LabelCounter,
}

/// Per-class mixed predictor `(Σ_k λ_k^c W_k, Σ_k λ_k^c b_k)`. Unweighted
/// mode uses λ_k = 1/|A| for every class.
struct MixedTeachers {
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

fn mix_teachers(teachers: &[TeacherPredictor], classes: usize, weighted: bool) -> MixedTeachers {
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    for class in 0..classes {
        let lambdas: Vec<f64> = if weighted {
            let total: u64 = teachers.iter().map(|t| t.counter.counts()[class]).sum();
            if total == 0 {
                // Never sampled (the prior gives this class zero mass), but
                // keep the mix well-defined.
                vec![1.0 / teachers.len() as f64; teachers.len()]
            } else {
                teachers
                    .iter()
                    .map(|t| t.counter.counts()[class] as f64 / total as f64)
                    .collect()
            }
        } else {
            vec![1.0 / teachers.len() as f64; teachers.len()]
        };
        let mut w = Tensor::zeros(teachers[0].predictor.weights.shape());
        let mut b = Tensor::zeros(teachers[0].predictor.bias.shape());
        for (teacher, &lambda) in teachers.iter().zip(&lambdas) {
            w.add_scaled(&teacher.predictor.weights, lambda).unwrap();
            b.add_scaled(&teacher.predictor.bias, lambda).unwrap();
        }
        weights.push(w);
        biases.push(b);
    }
    MixedTeachers { weights, biases }
}

/// Run `steps` Adam updates on the generator against frozen teachers.
/// Returns the mean per-step loss (teacher CE + weighted diversity).
#[allow(clippy::too_many_arguments)]
pub fn train_generator(
    generator: &mut Generator,
    optimizer: &mut OptimizerState,
    teachers: &[TeacherPredictor],
    prior: &LabelPrior,
    steps: usize,
    batch: usize,
    diversity_weight: f64,
    weighted: bool,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if teachers.is_empty() {
        return Err(Error::InvalidConfig(
            "generator training needs at least one teacher".into(),
        ));
    }
    let classes = generator.arch().num_classes;
    let latent = generator.arch().latent_dim;
    for teacher in teachers {
        if teacher.predictor.in_dim() != latent || teacher.predictor.out_dim() != classes {
            return Err(Error::ShapeMismatch {
                context: "train_generator(teacher)",
                left: teacher.predictor.weights.shape().to_vec(),
                right: vec![latent, classes],
            });
        }
    }
    let mixed = mix_teachers(teachers, classes, weighted);

    let mut loss_sum = 0.0;
    for _ in 0..steps {
        let labels: Vec<usize> = (0..batch).map(|_| prior.sample(rng)).collect();
        let (z, eps, mut tape) = generator.forward_train(&labels, rng)?;

        // Ensemble logits row-by-row: logits_i = z_i·W_mix[y_i] + b_mix[y_i].
        let mut logits = Tensor::zeros(&[batch, classes]);
        for (i, &y) in labels.iter().enumerate() {
            let w = &mixed.weights[y];
            let b = &mixed.biases[y];
            let z_row = z.row(i).to_vec();
            let out = logits.row_mut(i);
            for (c, o) in out.iter_mut().enumerate() {
                let mut acc = b.data()[c];
                for (a, &zv) in z_row.iter().enumerate() {
                    acc += zv * w.data()[a * classes + c];
                }
                *o = acc;
            }
        }
        let (ce, dlogits, _) = softmax_cross_entropy(&logits, &labels)?;

        // dz_i = dlogits_i · W_mix[y_i]ᵀ
        let mut dz = Tensor::zeros(&[batch, latent]);
        for (i, &y) in labels.iter().enumerate() {
            let w = &mixed.weights[y];
            let drow = dlogits.row(i).to_vec();
            let out = dz.row_mut(i);
            for (a, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (c, &dv) in drow.iter().enumerate() {
                    acc += dv * w.data()[a * classes + c];
                }
                *o = acc;
            }
        }

        let (div, div_dz) = diversity_loss(&z, &eps, &labels)?;
        if diversity_weight != 0.0 {
            dz.add_scaled(&div_dz, diversity_weight)?;
        }

        let grads = generator.backward(&mut tape, &dz)?;
        let grad_tensors = grads.tensors();
        let mut params = generator.tensors_mut();
        optimizer.step(&mut params, &grad_tensors)?;

        loss_sum += ce + diversity_weight * div;
    }
    Ok(loss_sum / steps.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::count_labels;
    use crate::models::GeneratorArch;
    use crate::numerics::{Activation, OptimizerKind};
    use crate::rng::derive_rng;

    fn simple_teacher(tag: u64) -> DenseLayer {
        let mut rng = derive_rng(tag, &[77]);
        DenseLayer::glorot(4, 3, Activation::Identity, &mut rng)
    }

    #[test]
    fn single_teacher_weighted_matches_unweighted_bitwise() {
        let teacher = simple_teacher(1);
        let counter = count_labels(&[0, 0, 1, 2, 2, 2], 3).unwrap();
        let arch = GeneratorArch {
            noise_dim: 3,
            num_classes: 3,
            hidden_dim: 8,
            latent_dim: 4,
            leaky_slope: 0.2,
        };
        let prior = crate::data::aggregate_prior(&[&counter]).unwrap();

        let run = |weighted: bool| {
            let mut gen = Generator::init(&arch, &mut derive_rng(2, &[1]));
            let mut opt = OptimizerState::new(OptimizerKind::adam(1e-3), &gen.tensors());
            let teachers = [TeacherPredictor {
                predictor: &teacher,
                counter: &counter,
            }];
            let mut rng = derive_rng(3, &[2]);
            train_generator(
                &mut gen, &mut opt, &teachers, &prior, 5, 16, 1.0, weighted, &mut rng,
            )
            .unwrap();
            gen
        };
        let a = run(true);
        let b = run(false);
        for (x, y) in a.tensors().iter().zip(b.tensors()) {
            assert!(x.bit_eq(y));
        }
    }

    #[test]
    fn teachers_stay_frozen() {
        let teacher = simple_teacher(4);
        let before = teacher.clone();
        let counter = count_labels(&[0, 1, 2], 3).unwrap();
        let prior = crate::data::aggregate_prior(&[&counter]).unwrap();
        let arch = GeneratorArch {
            noise_dim: 3,
            num_classes: 3,
            hidden_dim: 8,
            latent_dim: 4,
            leaky_slope: 0.2,
        };
        let mut gen = Generator::init(&arch, &mut derive_rng(5, &[1]));
        let mut opt = OptimizerState::new(OptimizerKind::adam(1e-3), &gen.tensors());
        let teachers = [TeacherPredictor {
            predictor: &teacher,
            counter: &counter,
        }];
        train_generator(
            &mut gen,
            &mut opt,
            &teachers,
            &prior,
            10,
            8,
            1.0,
            true,
            &mut derive_rng(6, &[2]),
        )
        .unwrap();
        assert!(teacher.weights.bit_eq(&before.weights));
        assert!(teacher.bias.bit_eq(&before.bias));
    }
}
