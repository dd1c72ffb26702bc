//! Power-iteration spectral-norm estimation with persistent state.
//!
//! A `PowerIterState` holds left/right singular-vector estimates `(u, v)`
//! that survive across training steps, so one round of iteration per step
//! is enough to track a slowly moving weight matrix. Both vectors are
//! maintained: the update needs them and the backward pass of the
//! normalisation uses `u·vᵀ` as the gradient of the estimated norm.
//!
//! A state is owned by exactly one normalised parameter and must not be
//! stepped concurrently from two threads; between steps it is freely
//! sendable.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AonError, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

/// Norm floor below which power-iteration updates treat a vector as zero.
const ZERO_FLOOR: f64 = 1e-30;

/// Persistent eigenvector estimates for one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIterState<R: Scalar = f64> {
    pub u: Vector<R>,
    pub v: Vector<R>,
    pub iterations_per_step: usize,
}

/// Creates a state for a `rows x cols` matrix from a seeded standard
/// normal draw, L2-normalised. Identical seeds give identical states.
pub fn init_state<R: Scalar>(rows: usize, cols: usize, seed: u64) -> PowerIterState<R> {
    assert!(rows >= 1 && cols >= 1, "state needs positive dimensions");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vector<R> {
        let data: Vec<R> = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                R::of(z)
            })
            .collect();
        let v = Vector::from_vec(data);
        v.normalized(R::of(ZERO_FLOOR))
            .expect("normal draw has nonzero norm")
    };
    let u = draw(rows);
    let v = draw(cols);
    PowerIterState {
        u,
        v,
        iterations_per_step: 1,
    }
}

impl<R: Scalar> PowerIterState<R> {
    /// Overrides the per-step iteration count (defaults to 1, the usual
    /// one-round-per-training-iteration setting).
    pub fn with_iterations(mut self, n: usize) -> Self {
        self.iterations_per_step = n;
        self
    }

    fn check_dims(&self, m: &Matrix<R>, op: &'static str) -> Result<()> {
        if m.rows() != self.u.len() || m.cols() != self.v.len() {
            return Err(AonError::ShapeMismatch {
                op,
                expected: format!("{}x{}", self.u.len(), self.v.len()),
                got: format!("{}x{}", m.rows(), m.cols()),
            });
        }
        Ok(())
    }

    /// Runs `iterations_per_step` rounds of
    /// `v ← normalize(Mᵀu)`, `u ← normalize(Mv)` and returns the
    /// spectral-norm estimate `σ = uᵀMv` computed with the updated pair.
    ///
    /// An (effectively) all-zero matrix leaves the state untouched and
    /// returns `σ = 0`.
    pub fn step(&mut self, m: &Matrix<R>) -> Result<R> {
        self.check_dims(m, "power_step")?;
        let floor = R::of(ZERO_FLOOR);
        for _ in 0..self.iterations_per_step {
            let vt = match m.matvec_t(&self.u)?.normalized(floor) {
                Some(v) => v,
                None => return Ok(R::zero()),
            };
            let ut = match m.matvec(&vt)?.normalized(floor) {
                Some(u) => u,
                None => return Ok(R::zero()),
            };
            self.v = vt;
            self.u = ut;
        }
        self.estimate(m)
    }

    /// `σ = uᵀMv` with the current vectors, no update.
    pub fn estimate(&self, m: &Matrix<R>) -> Result<R> {
        self.check_dims(m, "power_estimate")?;
        m.matvec(&self.v)?.dot(&self.u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm_oracle;
    use crate::testsupport::{random_matrix, test_rng};

    #[test]
    fn init_is_deterministic() {
        let a = init_state::<f64>(3, 4, 7);
        let b = init_state::<f64>(3, 4, 7);
        assert_eq!(a, b);
        let c = init_state::<f64>(3, 4, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn init_vectors_are_unit_norm() {
        for seed in 0..20 {
            let s = init_state::<f64>(5, 9, seed);
            assert!((s.u.norm2() - 1.0).abs() < 1e-12);
            assert!((s.v.norm2() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_state_is_sign() {
        for seed in 0..10 {
            let s = init_state::<f64>(1, 1, seed);
            assert!((s.u.as_slice()[0].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_matrix_converges_to_top_entry() {
        let m = Matrix::diagonal(&[3.0, 1.0]);
        let mut s = init_state::<f64>(2, 2, 1);
        let mut sigma = 0.0;
        for _ in 0..100 {
            sigma = s.step(&m).unwrap();
        }
        assert!((sigma - 3.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_matrix_converges_in_one_step() {
        let m = Matrix::<f64>::identity(4).scale(2.0);
        let mut s = init_state::<f64>(4, 4, 9);
        let sigma = s.step(&m).unwrap();
        assert!((sigma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_jacobi_oracle() {
        let mut rng = test_rng(5);
        let m = random_matrix(&mut rng, 5, 3);
        let mut s = init_state::<f64>(5, 3, 2);
        let mut sigma = 0.0;
        for _ in 0..100 {
            sigma = s.step(&m).unwrap();
        }
        let oracle = spectral_norm_oracle(&m);
        assert!((sigma - oracle).abs() < 1e-9, "{sigma} vs {oracle}");
    }

    #[test]
    fn zero_matrix_guard() {
        let m = Matrix::<f64>::zeros(3, 4);
        let mut s = init_state::<f64>(3, 4, 3);
        let before = s.clone();
        let sigma = s.step(&m).unwrap();
        assert_eq!(sigma, 0.0);
        assert_eq!(s, before);
    }

    #[test]
    fn estimate_never_exceeds_oracle() {
        let mut rng = test_rng(13);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 4, 6);
            let oracle = spectral_norm_oracle(&m);
            let mut s = init_state::<f64>(4, 6, 77);
            for _ in 0..30 {
                let sigma = s.step(&m).unwrap();
                assert!(sigma <= oracle + 1e-9);
            }
        }
    }

    #[test]
    fn sigma_monotone_on_fixed_matrix() {
        let mut rng = test_rng(19);
        let m = random_matrix(&mut rng, 6, 4);
        let mut s = init_state::<f64>(6, 4, 4);
        let mut prev = 0.0;
        for _ in 0..50 {
            let sigma = s.step(&m).unwrap();
            assert!(sigma >= prev - 1e-12, "{sigma} < {prev}");
            prev = sigma;
        }
    }

    #[test]
    fn trajectory_is_bit_reproducible() {
        let mut rng = test_rng(23);
        let mats: Vec<_> = (0..5).map(|_| random_matrix(&mut rng, 4, 4)).collect();
        let run = || {
            let mut s = init_state::<f64>(4, 4, 11);
            mats.iter().map(|m| s.step(m).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = Matrix::<f64>::zeros(2, 2);
        let mut s = init_state::<f64>(3, 2, 0);
        assert!(matches!(s.step(&m), Err(AonError::ShapeMismatch { .. })));
    }

    #[test]
    fn multi_iteration_step_converges_faster() {
        let mut rng = test_rng(29);
        let m = random_matrix(&mut rng, 5, 5);
        let mut s = init_state::<f64>(5, 5, 1).with_iterations(100);
        let sigma = s.step(&m).unwrap();
        assert!((sigma - spectral_norm_oracle(&m)).abs() < 1e-9);
    }
}
