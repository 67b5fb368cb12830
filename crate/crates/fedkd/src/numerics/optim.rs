//! SGD and Adam over lists of parameter tensors.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    /// Adam with the standard β1=0.9, β2=0.999, ε=1e-8.
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state for one model's parameter list. Moment buffers (Adam)
/// mirror the parameter shapes; the step counter is shared across tensors.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    t: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &[&Tensor]) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd { .. } => Vec::new(),
            OptimizerKind::Adam { .. } => params
                .iter()
                .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
                .collect(),
        };
        OptimizerState { kind, t: 0, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update to every parameter tensor. SGD: `θ ← θ − lr·g`.
    /// Adam: bias-corrected first/second moments.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch {
                context: "optimizer_step",
                left: vec![params.len()],
                right: vec![grads.len()],
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    context: "optimizer_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, &dx) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= lr * dx;
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                if self.moments.len() != params.len() {
                    return Err(Error::ShapeMismatch {
                        context: "optimizer_step(moments)",
                        left: vec![self.moments.len()],
                        right: vec![params.len()],
                    });
                }
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(&mut self.moments) {
                    for (((x, &dx), m), v) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * dx;
                        *v = beta2 * *v + (1.0 - beta2) * dx * dx;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        for p in params.iter() {
            if !p.all_finite() {
                return Err(Error::NonFinite("optimizer_step"));
            }
        }
        Ok(())
    }
}
