//! Probability-space ensembling and server-side ensemble distillation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::numerics::{kl_divergence, softmax, OptimizerState, Tensor};

/// Mean of per-model softmax probabilities.
pub fn ensemble_predict(models: &[&Classifier], x: &Tensor) -> Result<Tensor> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidConfig("ensemble needs at least one model".into()))?;
    let (_, _, mut acc) = first.classify(x)?;
    for model in &models[1..] {
        let (_, _, probs) = model.classify(x)?;
        acc.add_scaled(&probs, 1.0)?;
    }
    acc.scale(1.0 / models.len() as f64);
    Ok(acc)
}

/// Refine the averaged global model by distilling the teacher ensemble over
/// unlabeled proxy batches: minimize
/// `KL(softmax(mean_k teacher_logits) ‖ softmax(student_logits))`.
///
/// Returns the mean per-step KL. The optimizer is typically a fresh Adam.
#[allow(clippy::too_many_arguments)]
pub fn server_distill_fusion(
    student: &mut Classifier,
    optimizer: &mut OptimizerState,
    teachers: &[&Classifier],
    proxy: &Dataset,
    steps: usize,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if teachers.is_empty() {
        return Err(Error::InvalidConfig(
            "fusion distillation needs at least one teacher".into(),
        ));
    }
    if proxy.is_empty() {
        return Err(Error::InvalidConfig("proxy dataset is empty".into()));
    }
    let mut loss_sum = 0.0;
    for _ in 0..steps {
        let indices: Vec<usize> = (0..batch)
            .map(|_| rng.gen_range(0..proxy.len()))
            .collect();
        let x = proxy.gather_features(&indices);

        // Teacher: softmax of averaged logits over full client models.
        let (_, mut teacher_logits, _) = teachers[0].classify(&x)?;
        for teacher in &teachers[1..] {
            let (_, logits, _) = teacher.classify(&x)?;
            teacher_logits.add_scaled(&logits, 1.0)?;
        }
        teacher_logits.scale(1.0 / teachers.len() as f64);
        let teacher_probs = softmax(&teacher_logits);

        let (_, student_logits, mut tape) = student.forward_train(&x)?;
        let student_probs = softmax(&student_logits);
        let (kl, dlogits) = kl_divergence(&teacher_probs, &student_probs)?;
        let grads = student.backward(&mut tape, &dlogits)?;
        let grad_tensors = grads.tensors();
        let mut params = student.tensors_mut();
        optimizer.step(&mut params, &grad_tensors)?;
        loss_sum += kl;
    }
    Ok(loss_sum / steps.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ClassifierArch;
    use crate::numerics::{Activation, OptimizerKind};
    use crate::rng::derive_rng;

    fn arch() -> ClassifierArch {
        ClassifierArch {
            input_dim: 2,
            feature_widths: vec![6],
            num_classes: 3,
            hidden_activation: Activation::Relu,
        }
    }

    #[test]
    fn ensemble_of_identical_models_equals_single_model() {
        let clf = Classifier::init(&arch(), &mut derive_rng(1, &[1]));
        let x = Tensor::from_rows(&[vec![0.4, -0.7], vec![1.0, 0.2]]).unwrap();
        let single = clf.classify(&x).unwrap().2;
        let ens = ensemble_predict(&[&clf, &clf, &clf], &x).unwrap();
        for (a, b) in ens.data().iter().zip(single.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for row in 0..2 {
            let sum: f64 = ens.row(row).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn opposing_certain_models_average_to_half() {
        // Identity-extractor linear models rigged to produce certain,
        // opposite predictions.
        let a2 = ClassifierArch {
            input_dim: 2,
            feature_widths: vec![],
            num_classes: 2,
            hidden_activation: Activation::Relu,
        };
        let mut m1 = Classifier::init(&a2, &mut derive_rng(2, &[1]));
        let mut m2 = m1.clone();
        for t in m1.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        for t in m2.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        // bias tensor is the last one; favor class 0 strongly in m1, class 1 in m2
        m1.tensors_mut().last_mut().unwrap().data_mut()[0] = 50.0;
        m2.tensors_mut().last_mut().unwrap().data_mut()[1] = 50.0;
        let x = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let probs = ensemble_predict(&[&m1, &m2], &x).unwrap();
        assert!((probs.data()[0] - 0.5).abs() < 1e-9);
        assert!((probs.data()[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn student_equal_to_teachers_is_a_fixed_point() {
        let clf = Classifier::init(&arch(), &mut derive_rng(3, &[1]));
        let task = crate::data::make_prototype(4, 30).unwrap();
        let mut student = clf.clone();
        let mut opt = OptimizerState::new(OptimizerKind::adam(1e-4), &student.tensors());
        let kl = server_distill_fusion(
            &mut student,
            &mut opt,
            &[&clf, &clf],
            &task.test,
            5,
            16,
            &mut derive_rng(4, &[2]),
        )
        .unwrap();
        // KL of identical distributions is 0 and the zero gradient leaves
        // parameters exactly in place under Adam with zero moments.
        assert!(kl.abs() < 1e-12);
        for (a, b) in student.tensors().iter().zip(clf.tensors()) {
            assert!(a.bit_eq(b));
        }
    }
}
