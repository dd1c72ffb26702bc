//! Minimal layer zoo: dense and 2-D convolutional layers with optional
//! orthonormal normalisation, batch normalisation, ReLU, max-pooling and
//! softmax cross-entropy, each with an exact backward pass.
//!
//! Layers are driven through [`Sequential`] in one of three modes:
//!
//! - [`ForwardMode::Train`]: batch statistics, running-stat updates, one
//!   power-iteration step per normalised weight.
//! - [`ForwardMode::Probe`]: batch statistics but no state mutation at
//!   all — the pure function that finite-difference checks differentiate.
//! - [`ForwardMode::Eval`]: running statistics and fixed (or frozen)
//!   transforms; what inference uses.
//!
//! Forward/backward on one network instance is single-threaded per step;
//! distinct instances may train on parallel threads.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod loss;
mod model;

pub use batchnorm::{BatchNormCache, BatchNormLayer};
pub use conv::{ConvCache, ConvLayer};
pub use dense::{DenseCache, DenseKind, DenseLayer, NormMode};
pub use loss::{accuracy, softmax_cross_entropy, softmax_cross_entropy_batch};
pub use model::{Grads, Layer, LayerCache, Sequential, Value};

/// How a forward pass is allowed to touch layer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Update power-iteration states and running statistics.
    Train,
    /// Batch statistics, but leave every piece of state untouched.
    Probe,
    /// Inference: running statistics and fixed/frozen transforms.
    Eval,
}
