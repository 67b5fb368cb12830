//! Dense layers with hand-derived backprop.
//!
//! A `DenseLayer` computes `activation(x·W + b)` for a whole batch. The
//! forward pass returns a `GradTape` caching the batch input and the
//! pre-activation values; the tape drives exactly one backward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Element-wise activation applied after the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    /// Leaky ReLU with the given negative-side slope.
    LeakyRelu(f64),
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// Derivative as a function of the pre-activation input.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if pre > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
        }
    }
}

/// Dense layer: weights `[in_dim × out_dim]`, bias `[out_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    /// Zero-initialized layer.
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Tensor::zeros(&[in_dim, out_dim]),
            bias: Tensor::zeros(&[out_dim]),
            activation,
        }
    }

    /// Glorot-uniform initialization: weights in ±sqrt(6/(fan_in+fan_out)),
    /// bias zero. Draw order is fixed (row-major) so seeded runs replay.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = DenseLayer::zeros(in_dim, out_dim, activation);
        for w in layer.weights.data_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Cached forward state for one backward pass.
///
/// `backward` may run at most once per forward; a second call on the same
/// tape is an error.
#[derive(Debug)]
pub struct GradTape {
    input: Tensor,
    pre_activation: Tensor,
    consumed: bool,
}

impl GradTape {
    pub fn pre_activation(&self) -> &Tensor {
        &self.pre_activation
    }
}

/// Gradients produced by [`dense_backward`].
#[derive(Debug)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Batch forward: `output = activation(input·W + b)`, input `[B × in_dim]`.
pub fn dense_forward(layer: &DenseLayer, input: &Tensor) -> Result<(Tensor, GradTape)> {
    if input.shape().len() != 2 || input.cols() != layer.in_dim() {
        return Err(Error::ShapeMismatch {
            context: "dense_forward",
            left: input.shape().to_vec(),
            right: layer.weights.shape().to_vec(),
        });
    }
    let mut pre = input.matmul(&layer.weights)?;
    pre.add_row_vector(&layer.bias)?;
    let mut output = pre.clone();
    for x in output.data_mut() {
        *x = layer.activation.apply(*x);
    }
    let tape = GradTape {
        input: input.clone(),
        pre_activation: pre,
        consumed: false,
    };
    Ok((output, tape))
}

/// Inference-only forward, no tape.
pub fn dense_infer(layer: &DenseLayer, input: &Tensor) -> Result<Tensor> {
    if input.shape().len() != 2 || input.cols() != layer.in_dim() {
        return Err(Error::ShapeMismatch {
            context: "dense_infer",
            left: input.shape().to_vec(),
            right: layer.weights.shape().to_vec(),
        });
    }
    let mut pre = input.matmul(&layer.weights)?;
    pre.add_row_vector(&layer.bias)?;
    for x in pre.data_mut() {
        *x = layer.activation.apply(*x);
    }
    Ok(pre)
}

/// Backward pass for the scalar loss whose gradient w.r.t. the layer output
/// is `upstream` (`[B × out_dim]`). Consumes the tape.
pub fn dense_backward(
    layer: &DenseLayer,
    tape: &mut GradTape,
    upstream: &Tensor,
) -> Result<DenseGrads> {
    if tape.consumed {
        return Err(Error::TapeConsumed);
    }
    if upstream.shape() != tape.pre_activation.shape() {
        return Err(Error::ShapeMismatch {
            context: "dense_backward",
            left: upstream.shape().to_vec(),
            right: tape.pre_activation.shape().to_vec(),
        });
    }
    tape.consumed = true;

    // dZ = upstream ⊙ activation'(pre)
    let mut dz = upstream.clone();
    for (g, &pre) in dz.data_mut().iter_mut().zip(tape.pre_activation.data()) {
        *g *= layer.activation.derivative(pre);
    }

    let input_grad = dz.matmul_bt(&layer.weights)?;
    let weight_grad = tape.input.matmul_at(&dz)?;
    let bias_grad = dz.column_sums();

    Ok(DenseGrads {
        input: input_grad,
        weights: weight_grad,
        bias: bias_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = DenseLayer::zeros(2, 2, Activation::Identity);
        layer.weights.data_mut()[0] = 1.0;
        layer.weights.data_mut()[3] = 1.0;
        let input = Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let (out, _) = dense_forward(&layer, &input).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let mut layer = DenseLayer::zeros(2, 1, Activation::Relu);
        layer.weights.data_mut().copy_from_slice(&[1.0, 1.0]);
        layer.bias.data_mut()[0] = -5.0;
        let input = Tensor::from_rows(&[vec![2.0, 2.0]]).unwrap();
        let (out, _) = dense_forward(&layer, &input).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn bias_grad_is_ones_for_identity_upstream_ones() {
        let layer = DenseLayer::zeros(3, 2, Activation::Identity);
        let input = Tensor::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let (_, mut tape) = dense_forward(&layer, &input).unwrap();
        let upstream = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let grads = dense_backward(&layer, &mut tape, &upstream).unwrap();
        assert_eq!(grads.bias.data(), &[1.0, 1.0]);
        // weight grad = input^T · upstream
        assert_eq!(grads.weights.data(), &[0.5, 0.5, -1.0, -1.0, 2.0, 2.0]);
    }

    #[test]
    fn tape_reuse_is_rejected() {
        let layer = DenseLayer::zeros(2, 2, Activation::Identity);
        let input = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let (_, mut tape) = dense_forward(&layer, &input).unwrap();
        let upstream = Tensor::zeros(&[1, 2]);
        assert!(dense_backward(&layer, &mut tape, &upstream).is_ok());
        assert!(matches!(
            dense_backward(&layer, &mut tape, &upstream),
            Err(Error::TapeConsumed)
        ));
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let layer = DenseLayer::zeros(3, 2, Activation::Identity);
        let input = Tensor::zeros(&[1, 2]);
        assert!(matches!(
            dense_forward(&layer, &input),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
