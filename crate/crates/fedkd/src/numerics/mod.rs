//! Dense-tensor math with hand-derived backprop: layers, losses, optimizers,
//! and the finite-difference gradient checker.

pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use layer::{dense_backward, dense_forward, dense_infer, Activation, DenseGrads, DenseLayer, GradTape};
pub use loss::{cross_entropy, kl_divergence, softmax, softmax_cross_entropy};
pub use optim::{OptimizerKind, OptimizerState};
pub use tensor::Tensor;
