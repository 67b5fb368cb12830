//! The conditional latent-feature generator.
//!
//! Two dense layers mapping `concat(noise, onehot(label))` to a latent
//! sample: a LeakyReLU hidden layer and an identity output layer. Noise is
//! standard normal, re-drawn per sample, and returned alongside the latents
//! so the diversity regularizer can relate noise distance to output distance.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dense_backward, dense_forward, dense_infer, Activation, DenseLayer, GradTape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub noise_dim: usize,
    pub num_classes: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub leaky_slope: f64,
}

impl GeneratorArch {
    /// Hidden/noise sizes from the reference configuration: noise 32,
    /// hidden 256, LeakyReLU slope 0.2.
    pub fn standard(num_classes: usize, latent_dim: usize) -> Self {
        GeneratorArch {
            noise_dim: 32,
            num_classes,
            hidden_dim: 256,
            latent_dim,
            leaky_slope: 0.2,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.noise_dim + self.num_classes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    arch: GeneratorArch,
    hidden: DenseLayer,
    output: DenseLayer,
}

/// Tapes from a training-mode generator forward.
pub struct GeneratorTape {
    hidden: GradTape,
    output: GradTape,
}

#[derive(Debug, Clone)]
pub struct GeneratorGrads {
    pub hidden: (Tensor, Tensor),
    pub output: (Tensor, Tensor),
}

impl GeneratorGrads {
    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.hidden.0, &self.hidden.1, &self.output.0, &self.output.1]
    }
}

impl Generator {
    pub fn init<R: Rng>(arch: &GeneratorArch, rng: &mut R) -> Self {
        let hidden = DenseLayer::glorot(
            arch.input_dim(),
            arch.hidden_dim,
            Activation::LeakyRelu(arch.leaky_slope),
            rng,
        );
        let output = DenseLayer::glorot(arch.hidden_dim, arch.latent_dim, Activation::Identity, rng);
        Generator {
            arch: arch.clone(),
            hidden,
            output,
        }
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.hidden.weights,
            &self.hidden.bias,
            &self.output.weights,
            &self.output.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden.weights,
            &mut self.hidden.bias,
            &mut self.output.weights,
            &mut self.output.bias,
        ]
    }

    pub fn set_tensors(&mut self, tensors: &[Tensor]) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::ShapeMismatch {
                context: "Generator::set_tensors",
                left: vec![slots.len()],
                right: vec![tensors.len()],
            });
        }
        for (slot, value) in slots.iter_mut().zip(tensors) {
            if slot.shape() != value.shape() {
                return Err(Error::ShapeMismatch {
                    context: "Generator::set_tensors",
                    left: slot.shape().to_vec(),
                    right: value.shape().to_vec(),
                });
            }
            **slot = value.clone();
        }
        Ok(())
    }

    /// Build the `[B × (noise+classes)]` input block: fresh standard-normal
    /// noise concatenated with one-hot labels. Returns `(input, eps)`.
    fn build_input<R: Rng>(&self, labels: &[usize], rng: &mut R) -> Result<(Tensor, Tensor)> {
        let b = labels.len();
        let (dn, c) = (self.arch.noise_dim, self.arch.num_classes);
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: c,
                    index: i,
                });
            }
        }
        let mut input = Tensor::zeros(&[b, dn + c]);
        let mut eps = Tensor::zeros(&[b, dn]);
        for i in 0..b {
            let eps_row = eps.row_mut(i);
            for e in eps_row.iter_mut() {
                *e = rng.sample(StandardNormal);
            }
            let row = input.row_mut(i);
            row[..dn].copy_from_slice(eps.row(i));
            row[dn + labels[i]] = 1.0;
        }
        Ok((input, eps))
    }

    /// Inference sampling: `(z, eps)` with `z = G(eps, onehot(label))`.
    pub fn generate<R: Rng>(&self, labels: &[usize], rng: &mut R) -> Result<(Tensor, Tensor)> {
        let (input, eps) = self.build_input(labels, rng)?;
        let h = dense_infer(&self.hidden, &input)?;
        let z = dense_infer(&self.output, &h)?;
        Ok((z, eps))
    }

    /// Training-mode sampling, keeping tapes for the backward pass.
    pub fn forward_train<R: Rng>(
        &self,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<(Tensor, Tensor, GeneratorTape)> {
        let (input, eps) = self.build_input(labels, rng)?;
        let (h, hidden_tape) = dense_forward(&self.hidden, &input)?;
        let (z, output_tape) = dense_forward(&self.output, &h)?;
        Ok((
            z,
            eps,
            GeneratorTape {
                hidden: hidden_tape,
                output: output_tape,
            },
        ))
    }

    /// Backward from a gradient w.r.t. the latent output `z`.
    pub fn backward(&self, tape: &mut GeneratorTape, dz: &Tensor) -> Result<GeneratorGrads> {
        let out_grads = dense_backward(&self.output, &mut tape.output, dz)?;
        let hidden_grads = dense_backward(&self.hidden, &mut tape.hidden, &out_grads.input)?;
        Ok(GeneratorGrads {
            hidden: (hidden_grads.weights, hidden_grads.bias),
            output: (out_grads.weights, out_grads.bias),
        })
    }
}

/// Mode-seeking diversity loss over same-label pairs:
/// `mean ||eps_i − eps_j||₁ / (||z_i − z_j||₁ + 1e-8)`. Pairs with distinct
/// labels are excluded; no qualifying pair gives loss 0. Returns the loss
/// and its gradient w.r.t. `z`.
pub fn diversity_loss(z: &Tensor, eps: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    const DENOM_EPS: f64 = 1e-8;
    let b = z.rows();
    if eps.rows() != b || labels.len() != b {
        return Err(Error::ShapeMismatch {
            context: "diversity_loss",
            left: vec![b],
            right: vec![eps.rows(), labels.len()],
        });
    }
    let mut dz = Tensor::zeros(z.shape());
    let mut pairs = 0usize;
    let mut total = 0.0;
    // First pass to count pairs so gradients can be scaled by the mean.
    for i in 0..b {
        for j in (i + 1)..b {
            if labels[i] == labels[j] {
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Ok((0.0, dz));
    }
    let inv_pairs = 1.0 / pairs as f64;
    for i in 0..b {
        for j in (i + 1)..b {
            if labels[i] != labels[j] {
                continue;
            }
            let eps_l1: f64 = eps
                .row(i)
                .iter()
                .zip(eps.row(j))
                .map(|(&a, &b)| (a - b).abs())
                .sum();
            let z_l1: f64 = z
                .row(i)
                .iter()
                .zip(z.row(j))
                .map(|(&a, &b)| (a - b).abs())
                .sum();
            let denom = z_l1 + DENOM_EPS;
            total += eps_l1 / denom;
            // d(term)/dz_i = -eps_l1/denom² · sign(z_i − z_j), and the
            // negated value for z_j.
            let coeff = -eps_l1 / (denom * denom) * inv_pairs;
            let (zi, zj): (Vec<f64>, Vec<f64>) = (z.row(i).to_vec(), z.row(j).to_vec());
            for (d, (&a, &b)) in dz.row_mut(i).iter_mut().zip(zi.iter().zip(&zj)) {
                *d += coeff * (a - b).signum();
            }
            for (d, (&a, &b)) in dz.row_mut(j).iter_mut().zip(zi.iter().zip(&zj)) {
                *d -= coeff * (a - b).signum();
            }
        }
    }
    Ok((total * inv_pairs, dz))
}
