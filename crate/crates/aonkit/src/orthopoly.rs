//! Taylor approximation `P_q(W)` of `(WWᵀ)^(-1/2)` around the identity.
//!
//! For the scalar function `x^(-1/2)` expanded at 1, the coefficients of
//! `(x − 1)^k` satisfy `c_0 = 1`, `c_k = c_{k-1} · (-(2k-1)/(2k))`. The
//! matrix version substitutes `G = WWᵀ` for `x` and is valid whenever the
//! eigenvalues of `G` lie in `(0, 2)`. No eigenvalue-range check is
//! enforced at runtime; [`gram_spectrum`] exposes the spectrum as a
//! diagnostic when the caller wants to inspect it.

use crate::error::{AonError, Result};
use crate::linalg::{jacobi_eigen, matrix_polynomial_horner, Matrix};
use crate::scalar::Scalar;

/// Coefficients of the order-`q` expansion in powers of `(x − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorCoeffs<R: Scalar = f64> {
    order: usize,
    coeffs: Vec<R>,
}

impl<R: Scalar> TaylorCoeffs<R> {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficients `c_0 ..= c_q`.
    pub fn as_slice(&self) -> &[R] {
        &self.coeffs
    }
}

/// Generates the expansion coefficients up to order `q` by the recurrence
/// `c_k = c_{k-1} · (-(2k-1)/(2k))`, so arbitrary orders are available for
/// the q-sweep ablation rather than only the hard-coded low orders.
pub fn taylor_coeffs<R: Scalar>(q: usize) -> TaylorCoeffs<R> {
    let mut coeffs = Vec::with_capacity(q + 1);
    let mut c = R::one();
    coeffs.push(c);
    for k in 1..=q {
        let ratio = -((2 * k - 1) as f64) / ((2 * k) as f64);
        c = c * R::of(ratio);
        coeffs.push(c);
    }
    TaylorCoeffs { order: q, coeffs }
}

/// Evaluates `P_q(W) = sum_k c_k (G − I)^k` with `G = gram(W)`, by
/// Horner's scheme in `(G − I)` (exactly `q` matrix multiplications).
pub fn eval_pq<R: Scalar>(w: &Matrix<R>, q: usize) -> Result<Matrix<R>> {
    if !w.is_finite() {
        return Err(AonError::NonFinite("eval_pq"));
    }
    let coeffs = taylor_coeffs::<R>(q);
    matrix_polynomial_horner(coeffs.as_slice(), &w.gram())
}

/// Orthonormality deviation `‖P_q(W)·G·P_q(W)ᵀ − I‖_F` of the
/// pre-normalisation product. Decreases toward zero with growing `q`
/// whenever the spectrum of `G` stays inside `(0, 2)`.
pub fn approximation_error<R: Scalar>(w: &Matrix<R>, q: usize) -> Result<R> {
    let p = eval_pq(w, q)?;
    let pgp = p.matmul(&w.gram())?.matmul(&p.transpose())?;
    Ok(pgp.deviation_from_identity())
}

/// Diagnostic: eigenvalues of `WWᵀ` in descending order, via the Jacobi
/// oracle. Singular spectra (rows > cols) simply report zeros.
pub fn gram_spectrum<R: Scalar>(w: &Matrix<R>) -> Vec<R> {
    let (vals, _) = jacobi_eigen(&w.gram()).expect("gram matrix is square");
    vals
}
