//! Central-finite-difference gradient verification.
//!
//! Used by the unit tests and by the `selftest` CLI command. The loss
//! closure receives a candidate parameter list and must be deterministic.

use crate::numerics::tensor::Tensor;

/// Per-tensor worst relative error between analytic and numerical gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_tensor: Vec<f64>,
    pub max_rel_err: f64,
}

/// Relative error with a floor so near-zero gradient pairs compare on an
/// absolute scale instead of blowing up.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Compare `analytic` gradients against central differences of `loss`
/// evaluated at `params`, with perturbation `h`.
pub fn gradient_check<F>(
    mut loss: F,
    params: &[Tensor],
    analytic: &[Tensor],
    h: f64,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "parameter/gradient arity");
    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_tensor = Vec::with_capacity(params.len());
    let mut max_rel = 0.0_f64;
    for ti in 0..params.len() {
        assert_eq!(params[ti].shape(), analytic[ti].shape());
        let mut worst = 0.0_f64;
        for ei in 0..params[ti].len() {
            let original = work[ti].data()[ei];
            work[ti].data_mut()[ei] = original + h;
            let plus = loss(&work);
            work[ti].data_mut()[ei] = original - h;
            let minus = loss(&work);
            work[ti].data_mut()[ei] = original;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(analytic[ti].data()[ei], numeric));
        }
        per_tensor.push(worst);
        max_rel = max_rel.max(worst);
    }
    GradCheckReport {
        per_tensor,
        max_rel_err: max_rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::layer::{dense_backward, dense_forward, Activation, DenseLayer};
    use crate::numerics::loss::softmax_cross_entropy;
    use crate::rng::derive_rng;
    use rand::Rng;

    fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for x in t.data_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn dense_layer_gradients_match_finite_differences() {
        let mut rng = derive_rng(11, &[99]);
        let mut layer = DenseLayer::glorot(3, 4, Activation::LeakyRelu(0.2), &mut rng);
        layer.bias = random_tensor(&[4], &mut rng);
        let input = random_tensor(&[2, 3], &mut rng);
        let labels = [1_usize, 3];

        let (out, mut tape) = dense_forward(&layer, &input).unwrap();
        let (_, dlogits, _) = softmax_cross_entropy(&out, &labels).unwrap();
        let grads = dense_backward(&layer, &mut tape, &dlogits).unwrap();

        // Check weights, bias, and input in one report.
        let params = vec![layer.weights.clone(), layer.bias.clone(), input.clone()];
        let analytic = vec![grads.weights, grads.bias, grads.input];
        let base = layer.clone();
        let report = gradient_check(
            |ts: &[Tensor]| {
                let mut l = base.clone();
                l.weights = ts[0].clone();
                l.bias = ts[1].clone();
                let out = crate::numerics::layer::dense_infer(&l, &ts[2]).unwrap();
                softmax_cross_entropy(&out, &labels).unwrap().0
            },
            &params,
            &analytic,
            1e-5,
        );
        assert!(
            report.max_rel_err <= 1e-4,
            "max rel err {}",
            report.max_rel_err
        );
    }

    #[test]
    fn linear_model_gradient_matches_closed_form() {
        // For logits = X·W, d loss/dW = Xᵀ(p − Y)/B exactly.
        let mut rng = derive_rng(5, &[98]);
        let layer_w = random_tensor(&[4, 3], &mut rng);
        let x = random_tensor(&[6, 4], &mut rng);
        let labels = [0_usize, 1, 2, 0, 1, 2];

        let mut layer = DenseLayer::zeros(4, 3, Activation::Identity);
        layer.weights = layer_w.clone();
        let (logits, mut tape) = dense_forward(&layer, &x).unwrap();
        let (_, dlogits, probs) = softmax_cross_entropy(&logits, &labels).unwrap();
        let grads = dense_backward(&layer, &mut tape, &dlogits).unwrap();

        let mut residual = probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            residual.row_mut(i)[y] -= 1.0;
        }
        let mut closed = x.matmul_at(&residual).unwrap();
        closed.scale(1.0 / labels.len() as f64);
        for (a, b) in grads.weights.data().iter().zip(closed.data()) {
            assert!((a - b).abs() <= 1e-10, "analytic {a} vs closed form {b}");
        }
    }
}
