//! Batch normalisation over flat features.
//!
//! Training mode normalises by batch mean and population variance and
//! blends the batch statistics into the running ones with the configured
//! momentum; inference mode uses the running statistics. Freezing a layer
//! pins it to running statistics regardless of the forward mode.

use crate::error::{AonError, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

use super::ForwardMode;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer<R: Scalar = f64> {
    pub gamma: Vector<R>,
    pub beta: Vector<R>,
    pub running_mean: Vector<R>,
    pub running_var: Vector<R>,
    pub eps: R,
    pub momentum: R,
    pub training: bool,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<R: Scalar = f64> {
    x_hat: Matrix<R>,
    centered: Matrix<R>,
    inv_std: Vec<R>,
    batch_stats: bool,
}

impl<R: Scalar> BatchNormLayer<R> {
    /// New layer with `γ = 1`, `β = 0`, `eps = 1e-5`, momentum `0.1`.
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Vector::ones(features),
            beta: Vector::zeros(features),
            running_mean: Vector::zeros(features),
            running_var: Vector::ones(features),
            eps: R::of(1e-5),
            momentum: R::of(0.1),
            training: true,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(
        &mut self,
        x: &Matrix<R>,
        mode: ForwardMode,
    ) -> Result<(Matrix<R>, BatchNormCache<R>)> {
        let f = self.features();
        if x.cols() != f {
            return Err(AonError::ShapeMismatch {
                op: "batchnorm_forward",
                expected: format!("{f} features"),
                got: format!("{} features", x.cols()),
            });
        }
        let batch = x.rows();
        let use_batch_stats = self.training && mode != ForwardMode::Eval;

        let (mean, var) = if use_batch_stats {
            if batch < 2 {
                return Err(AonError::BatchTooSmall(batch));
            }
            let n = R::of(batch as f64);
            let mut mean = vec![R::zero(); f];
            for b in 0..batch {
                for (j, m) in mean.iter_mut().enumerate() {
                    *m = *m + x.get(b, j);
                }
            }
            for m in mean.iter_mut() {
                *m = *m / n;
            }
            let mut var = vec![R::zero(); f];
            for b in 0..batch {
                for (j, v) in var.iter_mut().enumerate() {
                    let d = x.get(b, j) - mean[j];
                    *v = *v + d * d;
                }
            }
            for v in var.iter_mut() {
                *v = *v / n;
            }
            (mean, var)
        } else {
            (
                self.running_mean.as_slice().to_vec(),
                self.running_var.as_slice().to_vec(),
            )
        };

        let inv_std: Vec<R> = var.iter().map(|v| R::one() / (*v + self.eps).sqrt()).collect();
        let mut centered = Matrix::zeros(batch, f);
        let mut x_hat = Matrix::zeros(batch, f);
        let mut out = Matrix::zeros(batch, f);
        for b in 0..batch {
            for j in 0..f {
                let c = x.get(b, j) - mean[j];
                let xh = c * inv_std[j];
                centered.set(b, j, c);
                x_hat.set(b, j, xh);
                out.set(b, j, self.gamma.as_slice()[j] * xh + self.beta.as_slice()[j]);
            }
        }

        if use_batch_stats && mode == ForwardMode::Train {
            let keep = R::one() - self.momentum;
            for j in 0..f {
                let rm = self.running_mean.as_mut_slice();
                rm[j] = keep * rm[j] + self.momentum * mean[j];
                let rv = self.running_var.as_mut_slice();
                rv[j] = keep * rv[j] + self.momentum * var[j];
            }
        }

        Ok((
            out,
            BatchNormCache {
                x_hat,
                centered,
                inv_std,
                batch_stats: use_batch_stats,
            },
        ))
    }

    /// Gradients w.r.t. the input plus `[grad_gamma, grad_beta]`.
    pub fn backward(
        &self,
        grad_out: &Matrix<R>,
        cache: &BatchNormCache<R>,
    ) -> Result<(Matrix<R>, Vec<Vec<R>>)> {
        let f = self.features();
        let batch = grad_out.rows();
        let n = R::of(batch as f64);

        let mut grad_gamma = vec![R::zero(); f];
        let mut grad_beta = vec![R::zero(); f];
        for b in 0..batch {
            for j in 0..f {
                let go = grad_out.get(b, j);
                grad_gamma[j] = grad_gamma[j] + go * cache.x_hat.get(b, j);
                grad_beta[j] = grad_beta[j] + go;
            }
        }

        let mut grad_x = Matrix::zeros(batch, f);
        if cache.batch_stats {
            for j in 0..f {
                let g = self.gamma.as_slice()[j];
                let istd = cache.inv_std[j];
                let mut sum_dxhat = R::zero();
                let mut sum_dxhat_c = R::zero();
                let mut sum_c = R::zero();
                for b in 0..batch {
                    let dxh = grad_out.get(b, j) * g;
                    let c = cache.centered.get(b, j);
                    sum_dxhat = sum_dxhat + dxh;
                    sum_dxhat_c = sum_dxhat_c + dxh * c;
                    sum_c = sum_c + c;
                }
                let dvar = sum_dxhat_c * R::of(-0.5) * istd * istd * istd;
                let dmean = -istd * sum_dxhat + dvar * R::of(-2.0) * sum_c / n;
                for b in 0..batch {
                    let dxh = grad_out.get(b, j) * g;
                    let c = cache.centered.get(b, j);
                    let dx = dxh * istd + dvar * R::of(2.0) * c / n + dmean / n;
                    grad_x.set(b, j, dx);
                }
            }
        } else {
            // running statistics are constants
            for j in 0..f {
                let g = self.gamma.as_slice()[j];
                let istd = cache.inv_std[j];
                for b in 0..batch {
                    grad_x.set(b, j, grad_out.get(b, j) * g * istd);
                }
            }
        }

        Ok((grad_x, vec![grad_gamma, grad_beta]))
    }

    pub fn param_slices(&self) -> Vec<&[R]> {
        vec![self.gamma.as_slice(), self.beta.as_slice()]
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [R]> {
        vec![self.gamma.as_mut_slice(), self.beta.as_mut_slice()]
    }
}
