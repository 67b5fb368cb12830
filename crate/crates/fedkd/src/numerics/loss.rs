//! Losses over batches of logits or probabilities.
//!
//! All batch reductions are means, so learning rates keep the same meaning
//! regardless of batch size.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax(logits: &Tensor) -> Tensor {
    let (b, c) = (logits.rows(), logits.cols());
    let mut out = Tensor::zeros(&[b, c]);
    for i in 0..b {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let out_row = out.row_mut(i);
        let mut sum = 0.0;
        for (o, &x) in out_row.iter_mut().zip(row) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in out_row.iter_mut() {
            *o /= sum;
        }
    }
    out
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::ShapeMismatch {
            context: "labels",
            left: vec![labels.len()],
            right: vec![batch],
        });
    }
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes,
                index: i,
            });
        }
    }
    Ok(())
}

/// Mean negative log-likelihood over the batch, from probabilities.
///
/// Returns the loss and its gradient w.r.t. the *logits* that produced the
/// probabilities: `(probs − onehot) / B`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = (probs.rows(), probs.cols());
    check_labels(labels, b, c)?;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    let inv_b = 1.0 / b as f64;
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs.row(i)[y].ln();
        let row = grad.row_mut(i);
        row[y] -= 1.0;
        for g in row.iter_mut() {
            *g *= inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}

/// Fused softmax + cross-entropy from logits, computed via a stabilized
/// log-softmax. Returns `(loss, grad w.r.t. logits, probs)`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, Tensor)> {
    let (b, c) = (logits.rows(), logits.cols());
    check_labels(labels, b, c)?;
    let probs = softmax(logits);
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
        loss += log_sum - row[y];
    }
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        row[y] -= 1.0;
        for g in row.iter_mut() {
            *g *= inv_b;
        }
    }
    Ok((loss * inv_b, grad, probs))
}

/// Mean over rows of `Σ_c p·log(p/q)` with the convention `0·log(0/q) = 0`.
///
/// Returns the divergence and its gradient w.r.t. the logits behind `q`,
/// `(q − p) / B`. Errors where `q` is zero but `p` is positive.
pub fn kl_divergence(p: &Tensor, q: &Tensor) -> Result<(f64, Tensor)> {
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch {
            context: "kl_divergence",
            left: p.shape().to_vec(),
            right: q.shape().to_vec(),
        });
    }
    let (b, c) = (p.rows(), p.cols());
    let mut total = 0.0;
    for i in 0..b {
        let (pr, qr) = (p.row(i), q.row(i));
        for j in 0..c {
            if pr[j] > 0.0 {
                if qr[j] <= 0.0 {
                    return Err(Error::InfiniteDivergence { row: i, class: j });
                }
                total += pr[j] * (pr[j] / qr[j]).ln();
            }
        }
    }
    let inv_b = 1.0 / b as f64;
    let mut grad = q.clone();
    grad.add_scaled(p, -1.0)?;
    grad.scale(inv_b);
    Ok((total * inv_b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetry_and_overflow() {
        let logits = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let p = softmax(&logits);
        assert!((p.data()[0] - 0.5).abs() < 1e-15);

        let big = Tensor::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let p = softmax(&big);
        assert!(p.all_finite());
        assert!(p.data()[0] > 0.999999);
        assert!(p.data()[1] < 1e-6);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_c() {
        let probs = Tensor::from_vec(&[1, 10], vec![0.1; 10]).unwrap();
        let (loss, _) = cross_entropy(&probs, &[3]).unwrap();
        assert!((loss - 10.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_perfect_prediction_is_zero() {
        let mut probs = Tensor::zeros(&[1, 4]);
        probs.data_mut()[2] = 1.0;
        let (loss, _) = cross_entropy(&probs, &[2]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        let probs = Tensor::from_vec(&[1, 3], vec![0.2, 0.3, 0.5]).unwrap();
        let err = cross_entropy(&probs, &[3]).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                label: 3,
                classes: 3,
                index: 0
            }
        ));
    }

    #[test]
    fn fused_loss_matches_two_step_computation() {
        let logits = Tensor::from_rows(&[vec![0.3, -1.2, 2.0], vec![0.0, 0.5, -0.5]]).unwrap();
        let labels = [2, 1];
        let (fused, fused_grad, probs) = softmax_cross_entropy(&logits, &labels).unwrap();
        let (two_step, grad) = cross_entropy(&softmax(&logits), &labels).unwrap();
        assert!((fused - two_step).abs() < 1e-12);
        for (a, b) in fused_grad.data().iter().zip(grad.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for row in 0..2 {
            let s: f64 = probs.row(row).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_closed_form_and_self_divergence() {
        let p = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let q = Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let (d, _) = kl_divergence(&p, &q).unwrap();
        assert!((d - 2.0_f64.ln()).abs() < 1e-12);

        let (zero, _) = kl_divergence(&q, &q).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn kl_rejects_zero_q_under_positive_p() {
        let p = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let q = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            kl_divergence(&p, &q),
            Err(Error::InfiniteDivergence { row: 0, class: 0 })
        ));
    }
}
