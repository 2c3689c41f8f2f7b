//! Dense network substrate: residual MLP stacks with reverse-mode gradients,
//! Adam, and the MSE loss.

mod adam;
pub mod gradcheck;
mod loss;
mod mlp;
mod scalar;

pub use adam::{adam_step, AdamState};
pub use loss::{mse, mse_grad};
pub use mlp::{fingerprint, sigmoid, Activation, DenseLayer, GradTape, ResidualMlp};
pub use scalar::Scalar;
