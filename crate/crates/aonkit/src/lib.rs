//! Approximated orthonormal weight normalisation for small trainable networks.
//!
//! The core transform maps a weight matrix `W` to `h(W) = P_q(W)·W / σ_P`,
//! where `P_q(W)` is the order-`q` Taylor approximation of `(WWᵀ)^(-1/2)`
//! around the identity and `σ_P` is a power-iteration estimate of the
//! spectral norm of `P_q(W)·W`. The rows of `h(W)` are approximately
//! orthonormal up to the scalar `1/σ_P²`, and the whole transform is
//! differentiable, so it can replace a plain weight matrix inside a layer.
//!
//! The crate bundles everything needed to study the transform end to end:
//!
//! - [`linalg`]: dense matrices/vectors plus a Jacobi spectral oracle
//! - [`orthopoly`]: the Taylor polynomial `P_q` and its approximation error
//! - [`specnorm`]: persistent-state power iteration
//! - [`aon`]: the normalisation itself, forward and exact backward
//! - [`regularize`]: orthonormal-penalty and weight-decay baselines
//! - [`nn`]: dense/conv/batch-norm/ReLU/cross-entropy layers with backward passes
//! - [`train`]: SGD-with-momentum loop, LR schedule, freezing, checkpoints
//! - [`data`]: synthetic datasets, IDX image files, standardization
//! - [`metrics`] and [`experiment`]: CSV metric emission and the ablation harness
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! `f64` is the default type parameter and the precision the CLI uses.

pub mod aon;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod orthopoly;
pub mod regularize;
pub mod scalar;
pub mod specnorm;
pub mod tensor;
pub mod train;

pub use error::{AonError, Result};
pub use scalar::Scalar;

/// Concrete `f64` aliases (the crate-wide default precision).
pub type Matrix64 = linalg::Matrix<f64>;
pub type Vector64 = linalg::Vector<f64>;
pub type Tensor4F64 = tensor::Tensor4<f64>;

/// Concrete `f32` aliases for single-precision experiments.
pub type Matrix32 = linalg::Matrix<f32>;
pub type Vector32 = linalg::Vector<f32>;
pub type Tensor4F32 = tensor::Tensor4<f32>;

#[cfg(test)]
pub(crate) use testsupport::test_rng;
