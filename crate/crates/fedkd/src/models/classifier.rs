//! The split classifier: feature extractor layers followed by a linear
//! predictor over the latent space.
//!
//! The predictor is always a single dense layer with identity activation;
//! its softmax lives in the loss. The two blocks are independently
//! addressable so protocols can share or withhold them separately.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    dense_backward, dense_forward, dense_infer, softmax, Activation, DenseLayer, GradTape, Tensor,
};

/// Architecture description. `feature_widths` lists the output width of each
/// feature-extractor layer; the last entry is the latent dimension. An empty
/// list means the identity extractor (latent space == input space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub input_dim: usize,
    pub feature_widths: Vec<usize>,
    pub num_classes: usize,
    pub hidden_activation: Activation,
}

impl ClassifierArch {
    pub fn latent_dim(&self) -> usize {
        self.feature_widths.last().copied().unwrap_or(self.input_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    arch: ClassifierArch,
    feature_layers: Vec<DenseLayer>,
    predictor: DenseLayer,
}

/// Tapes from a training-mode forward pass.
pub struct ClassifierTape {
    feature: Vec<GradTape>,
    predictor: GradTape,
}

/// Gradients for every parameter tensor, in [`Classifier::tensors`] order.
#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub feature: Vec<(Tensor, Tensor)>,
    pub predictor: (Tensor, Tensor),
}

impl ClassifierGrads {
    pub fn zeros_like(clf: &Classifier) -> Self {
        ClassifierGrads {
            feature: clf
                .feature_layers
                .iter()
                .map(|l| (Tensor::zeros(l.weights.shape()), Tensor::zeros(l.bias.shape())))
                .collect(),
            predictor: (
                Tensor::zeros(clf.predictor.weights.shape()),
                Tensor::zeros(clf.predictor.bias.shape()),
            ),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.feature.len() * 2 + 2);
        for (w, b) in &self.feature {
            out.push(w);
            out.push(b);
        }
        out.push(&self.predictor.0);
        out.push(&self.predictor.1);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.feature.len() * 2 + 2);
        for (w, b) in &mut self.feature {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.predictor.0);
        out.push(&mut self.predictor.1);
        out
    }

    pub fn add(&mut self, other: &ClassifierGrads) -> Result<()> {
        for ((w, b), (ow, ob)) in self.feature.iter_mut().zip(&other.feature) {
            w.add_scaled(ow, 1.0)?;
            b.add_scaled(ob, 1.0)?;
        }
        self.predictor.0.add_scaled(&other.predictor.0, 1.0)?;
        self.predictor.1.add_scaled(&other.predictor.1, 1.0)?;
        Ok(())
    }
}

impl Classifier {
    /// Glorot-uniform initialization in fixed layer order from the given RNG.
    pub fn init<R: Rng>(arch: &ClassifierArch, rng: &mut R) -> Self {
        let mut feature_layers = Vec::with_capacity(arch.feature_widths.len());
        let mut in_dim = arch.input_dim;
        for &width in &arch.feature_widths {
            feature_layers.push(DenseLayer::glorot(in_dim, width, arch.hidden_activation, rng));
            in_dim = width;
        }
        let predictor = DenseLayer::glorot(in_dim, arch.num_classes, Activation::Identity, rng);
        Classifier {
            arch: arch.clone(),
            feature_layers,
            predictor,
        }
    }

    pub fn arch(&self) -> &ClassifierArch {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn predictor(&self) -> &DenseLayer {
        &self.predictor
    }

    /// Replace the predictor block, keeping the feature extractor.
    pub fn set_predictor(&mut self, predictor: DenseLayer) -> Result<()> {
        if predictor.in_dim() != self.latent_dim()
            || predictor.out_dim() != self.arch.num_classes
        {
            return Err(Error::ShapeMismatch {
                context: "set_predictor",
                left: predictor.weights.shape().to_vec(),
                right: vec![self.latent_dim(), self.arch.num_classes],
            });
        }
        self.predictor = predictor;
        Ok(())
    }

    /// All parameter tensors: feature layers (weights, bias) in order,
    /// then the predictor (weights, bias).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.feature_layers.len() * 2 + 2);
        for layer in &self.feature_layers {
            out.push(&layer.weights);
            out.push(&layer.bias);
        }
        out.push(&self.predictor.weights);
        out.push(&self.predictor.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.feature_layers.len() * 2 + 2);
        for layer in &mut self.feature_layers {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.predictor.weights);
        out.push(&mut self.predictor.bias);
        out
    }

    /// Feature-extractor tensors only (θ^f block).
    pub fn feature_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.feature_layers.len() * 2);
        for layer in &self.feature_layers {
            out.push(&layer.weights);
            out.push(&layer.bias);
        }
        out
    }

    /// Predictor tensors only (θ^p block).
    pub fn predictor_tensors(&self) -> Vec<&Tensor> {
        vec![&self.predictor.weights, &self.predictor.bias]
    }

    /// Overwrite all parameters from a tensor list in [`Self::tensors`] order.
    pub fn set_tensors(&mut self, tensors: &[Tensor]) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::ShapeMismatch {
                context: "set_tensors",
                left: vec![slots.len()],
                right: vec![tensors.len()],
            });
        }
        for (slot, value) in slots.iter_mut().zip(tensors) {
            if slot.shape() != value.shape() {
                return Err(Error::ShapeMismatch {
                    context: "set_tensors",
                    left: slot.shape().to_vec(),
                    right: value.shape().to_vec(),
                });
            }
            **slot = value.clone();
        }
        Ok(())
    }

    /// Inference: `(z, logits, probs)` for a `[B × p]` batch.
    pub fn classify(&self, x: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let mut z = x.clone();
        for layer in &self.feature_layers {
            z = dense_infer(layer, &z)?;
        }
        let logits = dense_infer(&self.predictor, &z)?;
        let probs = softmax(&logits);
        Ok((z, logits, probs))
    }

    /// Predictor-only forward from latent samples: `(logits, probs)`.
    pub fn predict_from_latent(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let logits = dense_infer(&self.predictor, z)?;
        let probs = softmax(&logits);
        Ok((logits, probs))
    }

    /// Training-mode forward keeping tapes: `(z, logits, tape)`.
    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, Tensor, ClassifierTape)> {
        let mut feature = Vec::with_capacity(self.feature_layers.len());
        let mut z = x.clone();
        for layer in &self.feature_layers {
            let (next, tape) = dense_forward(layer, &z)?;
            feature.push(tape);
            z = next;
        }
        let (logits, predictor) = dense_forward(&self.predictor, &z)?;
        Ok((z, logits, ClassifierTape { feature, predictor }))
    }

    /// Backward through the whole model for a loss gradient w.r.t. logits.
    pub fn backward(&self, tape: &mut ClassifierTape, dlogits: &Tensor) -> Result<ClassifierGrads> {
        let pred_grads = dense_backward(&self.predictor, &mut tape.predictor, dlogits)?;
        let mut upstream = pred_grads.input;
        let mut feature = vec![
            (Tensor::zeros(&[0]), Tensor::zeros(&[0]));
            self.feature_layers.len()
        ];
        for (i, layer) in self.feature_layers.iter().enumerate().rev() {
            let grads = dense_backward(layer, &mut tape.feature[i], &upstream)?;
            feature[i] = (grads.weights, grads.bias);
            upstream = grads.input;
        }
        Ok(ClassifierGrads {
            feature,
            predictor: (pred_grads.weights, pred_grads.bias),
        })
    }

    /// Predictor-only training step pieces for synthetic latent batches:
    /// forward to logits, then gradients for θ^p alone.
    pub fn predictor_forward_train(&self, z: &Tensor) -> Result<(Tensor, GradTape)> {
        dense_forward(&self.predictor, z)
    }

    pub fn predictor_backward(
        &self,
        tape: &mut GradTape,
        dlogits: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let grads = dense_backward(&self.predictor, tape, dlogits)?;
        Ok((grads.weights, grads.bias))
    }

    /// Element-wise average of structurally identical classifiers, in the
    /// order given. Errors on empty input or mismatched architectures.
    pub fn average(models: &[&Classifier]) -> Result<Classifier> {
        let first = *models.first().ok_or_else(|| {
            Error::InvalidConfig("cannot average an empty model list".into())
        })?;
        let mut out = first.clone();
        let scale = 1.0 / models.len() as f64;
        {
            let mut slots = out.tensors_mut();
            for slot in slots.iter_mut() {
                slot.scale(scale);
            }
            for other in &models[1..] {
                let theirs = other.tensors();
                if theirs.len() != slots.len() {
                    return Err(Error::ShapeMismatch {
                        context: "Classifier::average",
                        left: vec![slots.len()],
                        right: vec![theirs.len()],
                    });
                }
                for (slot, tensor) in slots.iter_mut().zip(theirs) {
                    slot.add_scaled(tensor, scale)?;
                }
            }
        }
        Ok(out)
    }
}

/// Average a set of predictor layers element-wise.
pub fn average_predictors(layers: &[&DenseLayer]) -> Result<DenseLayer> {
    let first = *layers.first().ok_or_else(|| {
        Error::InvalidConfig("cannot average an empty predictor list".into())
    })?;
    let mut out = first.clone();
    let scale = 1.0 / layers.len() as f64;
    out.weights.scale(scale);
    out.bias.scale(scale);
    for layer in &layers[1..] {
        out.weights.add_scaled(&layer.weights, scale)?;
        out.bias.add_scaled(&layer.bias, scale)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cross_entropy, gradient_check, softmax_cross_entropy};
    use crate::rng::derive_rng;

    fn small_arch() -> ClassifierArch {
        ClassifierArch {
            input_dim: 3,
            feature_widths: vec![5, 4],
            num_classes: 3,
            hidden_activation: Activation::Relu,
        }
    }

    fn random_input(rows: usize, cols: usize, tag: u64) -> Tensor {
        use rand::Rng;
        let mut rng = derive_rng(tag, &[50]);
        let mut t = Tensor::zeros(&[rows, cols]);
        for x in t.data_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let arch = small_arch();
        let mut rng = derive_rng(0, &[1]);
        let mut clf = Classifier::init(&arch, &mut rng);
        for t in clf.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let x = random_input(4, 3, 2);
        let (_, _, probs) = clf.classify(&x).unwrap();
        for v in probs.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // and CE is exactly ln C for any latent input through the predictor
        let z = random_input(4, 4, 3);
        let (_, probs) = clf.predict_from_latent(&z).unwrap();
        let (loss, _) = cross_entropy(&probs, &[0, 1, 2, 0]).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn classify_composes_extract_and_predict() {
        let arch = small_arch();
        let mut rng = derive_rng(1, &[1]);
        let clf = Classifier::init(&arch, &mut rng);
        let x = random_input(5, 3, 4);
        let (z, logits, _) = clf.classify(&x).unwrap();
        let (logits2, _) = clf.predict_from_latent(&z).unwrap();
        assert!(logits.bit_eq(&logits2));
    }

    #[test]
    fn predictor_path_excludes_feature_gradients() {
        let arch = small_arch();
        let mut rng = derive_rng(2, &[1]);
        let clf = Classifier::init(&arch, &mut rng);
        let z = random_input(4, 4, 5);
        let (logits, mut tape) = clf.predictor_forward_train(&z).unwrap();
        let (_, dlogits, _) = softmax_cross_entropy(&logits, &[0, 1, 2, 1]).unwrap();
        let (dw, db) = clf.predictor_backward(&mut tape, &dlogits).unwrap();
        // Only θ^p gradients exist along this path; by construction θ^f is
        // untouched. Check the gradients are non-trivial.
        assert!(dw.data().iter().any(|&v| v != 0.0));
        assert!(db.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn full_pipeline_gradient_check() {
        let arch = small_arch();
        let mut rng = derive_rng(3, &[1]);
        let clf = Classifier::init(&arch, &mut rng);
        let x = random_input(4, 3, 6);
        let labels = [0_usize, 2, 1, 0];

        let (_, logits, mut tape) = clf.forward_train(&x).unwrap();
        let (_, dlogits, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        let grads = clf.backward(&mut tape, &dlogits).unwrap();

        let params: Vec<Tensor> = clf.tensors().into_iter().cloned().collect();
        let analytic: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
        let base = clf.clone();
        let report = gradient_check(
            |ts: &[Tensor]| {
                let mut m = base.clone();
                m.set_tensors(ts).unwrap();
                let (_, logits, _) = m.classify(&x).unwrap();
                softmax_cross_entropy(&logits, &labels).unwrap().0
            },
            &params,
            &analytic,
            1e-5,
        );
        assert!(report.max_rel_err <= 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn predictor_extraction_round_trip_is_bitwise() {
        let arch = small_arch();
        let mut rng = derive_rng(4, &[1]);
        let mut clf = Classifier::init(&arch, &mut rng);
        let x = random_input(3, 3, 7);
        let (_, before, _) = clf.classify(&x).unwrap();
        let predictor = clf.predictor().clone();
        clf.set_predictor(predictor).unwrap();
        let (_, after, _) = clf.classify(&x).unwrap();
        assert!(before.bit_eq(&after));
    }

    #[test]
    fn averaging_identical_models_is_identity_and_midpoint_is_mean() {
        let arch = small_arch();
        let mut rng = derive_rng(5, &[1]);
        let clf = Classifier::init(&arch, &mut rng);
        let avg = Classifier::average(&[&clf, &clf]).unwrap();
        for (a, b) in avg.tensors().iter().zip(clf.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }

        let mut zero = clf.clone();
        for t in zero.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let mut two = clf.clone();
        for t in two.tensors_mut() {
            t.data_mut().fill(2.0);
        }
        let mid = Classifier::average(&[&zero, &two]).unwrap();
        assert!(mid.tensors().iter().all(|t| t.data().iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn identity_extractor_when_feature_widths_empty() {
        let arch = ClassifierArch {
            input_dim: 2,
            feature_widths: vec![],
            num_classes: 3,
            hidden_activation: Activation::Relu,
        };
        let mut rng = derive_rng(6, &[1]);
        let clf = Classifier::init(&arch, &mut rng);
        assert_eq!(clf.latent_dim(), 2);
        let x = random_input(4, 2, 8);
        let (z, logits, _) = clf.classify(&x).unwrap();
        assert!(z.bit_eq(&x));
        let (logits2, _) = clf.predict_from_latent(&x).unwrap();
        assert!(logits.bit_eq(&logits2));
    }
}
