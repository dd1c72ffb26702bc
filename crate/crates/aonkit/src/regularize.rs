//! Penalty-based baselines: orthonormal regularisation and weight decay.
//!
//! The orthonormal penalty `(1/m²)·‖WWᵀ − I‖_F²` pushes the rows of `W`
//! toward orthonormality when added to the training loss with a
//! coefficient `β`. Gradients are analytic closed forms, applied to every
//! weight matrix (convolution kernels in their reshaped form) but not to
//! per-row scalings, biases or batch-norm parameters.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Which penalty the training loop adds to weight gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    Orthonormal,
    WeightDecay,
    None,
}

/// Penalty coefficient and kind. `beta = 10.0` is the reference setting
/// for orthonormal regularisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub beta: f64,
    pub kind: PenaltyKind,
}

impl PenaltyConfig {
    pub fn none() -> Self {
        Self {
            beta: 0.0,
            kind: PenaltyKind::None,
        }
    }

    pub fn orthonormal(beta: f64) -> Self {
        Self {
            beta,
            kind: PenaltyKind::Orthonormal,
        }
    }

    pub fn weight_decay(beta: f64) -> Self {
        Self {
            beta,
            kind: PenaltyKind::WeightDecay,
        }
    }
}

/// Orthonormal penalty `(1/m²)·‖WWᵀ − I‖_F²`.
pub fn orth_penalty<R: Scalar>(w: &Matrix<R>) -> R {
    let m = w.rows();
    let dev = w.gram().deviation_from_identity();
    dev * dev / R::of((m * m) as f64)
}

/// Analytic gradient `(4/m²)·(WWᵀ − I)·W` of [`orth_penalty`].
pub fn orth_penalty_grad<R: Scalar>(w: &Matrix<R>) -> Result<Matrix<R>> {
    let m = w.rows();
    let g = w.gram();
    let shifted = g.sub(&Matrix::identity(m))?;
    Ok(shifted.matmul(w)?.scale(R::of(4.0 / ((m * m) as f64))))
}

/// Weight-decay gradient `coeff · W`.
pub fn weight_decay_grad<R: Scalar>(w: &Matrix<R>, coeff: R) -> Matrix<R> {
    w.scale(coeff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsupport::{matrix_with_gram_spectrum, random_matrix, random_orthogonal, test_rng};

    #[test]
    fn penalty_zero_for_orthonormal_rows() {
        let mut rng = test_rng(1);
        let w = matrix_with_gram_spectrum(&mut rng, 3, 6, &[1.0; 3]);
        assert!(orth_penalty(&w) < 1e-24);
    }

    #[test]
    fn penalty_scaled_identity_case() {
        let w = Matrix::<f64>::identity(2).scale(2.0);
        assert!((orth_penalty(&w) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn penalty_matches_double_loop_oracle() {
        let mut rng = test_rng(2);
        let w = random_matrix(&mut rng, 3, 5);
        let m = 3;
        // naive elementwise evaluation of (1/m²)·sum_ij (G_ij − δ_ij)²
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let mut g = 0.0;
                for k in 0..5 {
                    g += w.get(i, k) * w.get(j, k);
                }
                let d = g - if i == j { 1.0 } else { 0.0 };
                acc += d * d;
            }
        }
        acc /= (m * m) as f64;
        assert!((orth_penalty(&w) - acc).abs() < 1e-12);
    }

    #[test]
    fn grad_zero_at_stationary_point() {
        let mut rng = test_rng(3);
        let w = matrix_with_gram_spectrum(&mut rng, 4, 7, &[1.0; 4]);
        let g = orth_penalty_grad(&w).unwrap();
        assert!(g.frobenius_norm() < 1e-12);
    }

    #[test]
    fn grad_scaled_identity_case() {
        let w = Matrix::<f64>::identity(2).scale(2.0);
        let g = orth_penalty_grad(&w).unwrap();
        let expected = Matrix::identity(2).scale(6.0);
        assert!(g.sub(&expected).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = test_rng(4);
        let w = random_matrix(&mut rng, 3, 5);
        let analytic = orth_penalty_grad(&w).unwrap();
        let step = 1e-6;
        let mut probe = w.clone();
        let mut numeric = Matrix::zeros(3, 5);
        for idx in 0..15 {
            let orig = probe.data()[idx];
            probe.data_mut()[idx] = orig + step;
            let plus = orth_penalty(&probe);
            probe.data_mut()[idx] = orig - step;
            let minus = orth_penalty(&probe);
            probe.data_mut()[idx] = orig;
            numeric.data_mut()[idx] = (plus - minus) / (2.0 * step);
        }
        let rel = analytic.sub(&numeric).unwrap().frobenius_norm()
            / analytic.frobenius_norm().max(1e-10);
        assert!(rel < 1e-6, "rel {rel}");
    }

    #[test]
    fn weight_decay_cases() {
        let mut rng = test_rng(5);
        let w = random_matrix(&mut rng, 3, 4);
        assert_eq!(weight_decay_grad(&w, 0.0), Matrix::zeros(3, 4));
        let eye = Matrix::<f64>::identity(2);
        let g = weight_decay_grad(&eye, 0.1);
        assert!((g.get(0, 0) - 0.1).abs() < 1e-15);
        assert_eq!(weight_decay_grad(&w, 2.5), w.scale(2.5));
    }

    #[test]
    fn penalty_invariant_under_row_permutation_and_rotation() {
        let mut rng = test_rng(6);
        let w = random_matrix(&mut rng, 4, 6);
        let base = orth_penalty(&w);

        // permute rows
        let perm = [2usize, 0, 3, 1];
        let permuted = Matrix::from_fn(4, 6, |i, j| w.get(perm[i], j));
        assert!((orth_penalty(&permuted) - base).abs() < 1e-10);

        // right-multiply by an orthogonal matrix: G is unchanged
        let q = random_orthogonal(&mut rng, 6);
        let rotated = w.matmul(&q).unwrap();
        assert!((orth_penalty(&rotated) - base).abs() < 1e-10 * base.max(1.0));
    }

    #[test]
    fn pure_penalty_descent_reaches_orthonormality() {
        let mut rng = test_rng(7);
        for trial in 0..3 {
            // full row rank start, spectrum away from zero
            let eigs: Vec<f64> = (0..4)
                .map(|_| rand::Rng::random_range(&mut rng, 0.4..2.4))
                .collect();
            let mut w = matrix_with_gram_spectrum(&mut rng, 4, 8, &eigs);
            let m = 4.0_f64;
            let lr = m * m / 40.0;
            let mut reached = false;
            for _ in 0..500 {
                if orth_penalty(&w) < 1e-6 {
                    reached = true;
                    break;
                }
                let g = orth_penalty_grad(&w).unwrap();
                w.add_scaled(&g, -lr).unwrap();
            }
            assert!(reached, "trial {trial}: penalty stuck at {}", orth_penalty(&w));
        }
    }
}
