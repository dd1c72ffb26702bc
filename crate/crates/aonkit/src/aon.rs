//! The approximated orthonormal normalisation transform.
//!
//! Standard mode computes `h(W) = P_q(W)·W / σ_P`, where `σ_P` is the
//! power-iteration estimate of the spectral norm of the product
//! `M = P_q(W)·W`, refreshed once per forward (update-then-use). Once the
//! estimate has converged, the spectral norm of `h` sits at 1 and
//! `h·hᵀ ≈ I/σ_P²`, i.e. the rows of `h` are orthonormal up to a scalar.
//!
//! The pre-normalised variant first rescales `W` by its own spectral norm
//! and evaluates `h = P_q(W/σ(W))·W/σ(W)` with no second normalisation.
//! It trains faster but validates worse, so it is opt-in via
//! [`AonMode::PreSn`].
//!
//! The backward pass is the exact gradient of the forward with the
//! eigenvector estimates `(u, v)` treated as constants, matching the
//! convention of spectral normalisation. A forward mutates its state, so
//! a parameter must be driven by one thread at a time; frozen parameters
//! are immutable and freely shareable.

use crate::error::{AonError, Result};
use crate::linalg::{outer, Matrix, Vector};
use crate::orthopoly::taylor_coeffs;
use crate::scalar::Scalar;
use crate::specnorm::{init_state, PowerIterState};

/// Whether spectral normalisation runs after or before the Taylor product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AonMode {
    /// `h = P_q(W)·W / σ(P_q(W)·W)` — the default.
    Standard,
    /// `h = P_q(W/σ(W))·W/σ(W)` — normalise first, no second scaling.
    PreSn,
}

/// A weight matrix wrapped in the normalisation, together with its Taylor
/// order, persistent power-iteration state, per-row scaling `γ` and the
/// cached transform used at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct AonParam<R: Scalar = f64> {
    pub w: Matrix<R>,
    pub q: usize,
    pub state: PowerIterState<R>,
    pub gamma: Vector<R>,
    pub frozen_h: Option<Matrix<R>>,
    pub mode: AonMode,
}

/// Intermediates of one forward pass, consumed by [`AonParam::backward`].
///
/// For the standard mode `product = P·W` and `sigma = σ_P`; for the
/// pre-normalised mode the fields describe the rescaled matrix
/// (`g`/`p`/`product` are computed from `W/σ(W)`) and `sigma = σ(W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AonForwardCache<R: Scalar = f64> {
    pub g: Matrix<R>,
    pub p: Matrix<R>,
    pub product: Matrix<R>,
    pub sigma: R,
}

impl<R: Scalar> AonParam<R> {
    /// Wraps `w` in standard mode with `γ = 1` and a seeded power state.
    pub fn new(w: Matrix<R>, q: usize, seed: u64) -> Self {
        Self::with_mode(w, q, seed, AonMode::Standard)
    }

    pub fn with_mode(w: Matrix<R>, q: usize, seed: u64, mode: AonMode) -> Self {
        let state = init_state(w.rows(), w.cols(), seed);
        let gamma = Vector::ones(w.rows());
        Self {
            w,
            q,
            state,
            gamma,
            frozen_h: None,
            mode,
        }
    }

    pub fn rows(&self) -> usize {
        self.w.rows()
    }

    pub fn cols(&self) -> usize {
        self.w.cols()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen_h.is_some()
    }

    /// Training forward: refreshes the power state (one step) and returns
    /// the transform plus the cache needed for the backward pass.
    /// Frozen parameters reject this path.
    pub fn forward(&mut self) -> Result<(Matrix<R>, AonForwardCache<R>)> {
        if self.is_frozen() {
            return Err(AonError::FrozenParam);
        }
        match self.mode {
            AonMode::Standard => {
                let (g, p, product) = self.taylor_product(&self.w)?;
                let sigma = self.state.step(&product)?;
                Self::finish_standard(g, p, product, sigma)
            }
            AonMode::PreSn => {
                let sigma_w = self.state.step(&self.w)?;
                self.finish_pre_sn(sigma_w)
            }
        }
    }

    /// Deterministic forward with the current `(u, v)` left untouched.
    /// Used for inference-time evaluation and for finite-difference
    /// checks. Returns the frozen transform when one is cached.
    pub fn forward_fixed(&self) -> Result<Matrix<R>> {
        if let Some(h) = &self.frozen_h {
            return Ok(h.clone());
        }
        self.forward_fixed_with_cache().map(|(h, _)| h)
    }

    /// Fixed-state forward that also yields the cache (gradient checks).
    pub fn forward_fixed_with_cache(&self) -> Result<(Matrix<R>, AonForwardCache<R>)> {
        match self.mode {
            AonMode::Standard => {
                let (g, p, product) = self.taylor_product(&self.w)?;
                let sigma = self.state.estimate(&product)?;
                Self::finish_standard(g, p, product, sigma)
            }
            AonMode::PreSn => {
                let sigma_w = self.state.estimate(&self.w)?;
                self.finish_pre_sn(sigma_w)
            }
        }
    }

    fn taylor_product(&self, w: &Matrix<R>) -> Result<(Matrix<R>, Matrix<R>, Matrix<R>)> {
        if !w.is_finite() {
            return Err(AonError::NonFinite("aon_forward"));
        }
        let g = w.gram();
        let coeffs = taylor_coeffs::<R>(self.q);
        let p = crate::linalg::matrix_polynomial_horner(coeffs.as_slice(), &g)?;
        let product = p.matmul(w)?;
        Ok((g, p, product))
    }

    fn finish_standard(
        g: Matrix<R>,
        p: Matrix<R>,
        product: Matrix<R>,
        sigma: R,
    ) -> Result<(Matrix<R>, AonForwardCache<R>)> {
        // Training steps always yield σ ≥ 0; a fixed-state estimate from
        // an unconverged pair may be negative, which the backward handles
        // exactly, so only a vanishing magnitude is degenerate.
        if sigma.abs() < R::of(1e-30) {
            return Err(AonError::DegenerateWeight);
        }
        let h = product.scale(R::one() / sigma);
        Ok((
            h,
            AonForwardCache {
                g,
                p,
                product,
                sigma,
            },
        ))
    }

    fn finish_pre_sn(&self, sigma_w: R) -> Result<(Matrix<R>, AonForwardCache<R>)> {
        if sigma_w.abs() < R::of(1e-30) {
            return Err(AonError::DegenerateWeight);
        }
        let w_hat = self.w.scale(R::one() / sigma_w);
        let (g, p, product) = self.taylor_product(&w_hat)?;
        let h = product.clone();
        Ok((
            h,
            AonForwardCache {
                g,
                p,
                product,
                sigma: sigma_w,
            },
        ))
    }

    /// Exact gradient of a scalar loss through the forward pass, with the
    /// eigenvector estimates held constant. `grad_h` is the loss gradient
    /// with respect to the returned transform.
    pub fn backward(&self, cache: &AonForwardCache<R>, grad_h: &Matrix<R>) -> Result<Matrix<R>> {
        if grad_h.rows() != self.w.rows() || grad_h.cols() != self.w.cols() {
            return Err(AonError::ShapeMismatch {
                op: "aon_backward",
                expected: format!("{}x{}", self.w.rows(), self.w.cols()),
                got: format!("{}x{}", grad_h.rows(), grad_h.cols()),
            });
        }
        match self.mode {
            AonMode::Standard => {
                // h = M/σ with σ = uᵀMv:
                //   grad_M = grad_h/σ − (⟨grad_h, M⟩/σ²)·u vᵀ
                let sigma = cache.sigma;
                let inner = grad_h.frobenius_dot(&cache.product)?;
                let mut grad_m = grad_h.scale(R::one() / sigma);
                let uv = outer(&self.state.u, &self.state.v);
                grad_m.add_scaled(&uv, -inner / (sigma * sigma))?;
                self.product_backward(cache, &self.w, &grad_m)
            }
            AonMode::PreSn => {
                // h = P(ŵ)·ŵ with ŵ = W/σ(W):
                //   grad_ŵ through the polynomial product, then the σ rule.
                let sigma = cache.sigma;
                let w_hat = self.w.scale(R::one() / sigma);
                let grad_w_hat = self.product_backward(cache, &w_hat, grad_h)?;
                let inner = grad_w_hat.frobenius_dot(&self.w)?;
                let mut grad_w = grad_w_hat.scale(R::one() / sigma);
                let uv = outer(&self.state.u, &self.state.v);
                grad_w.add_scaled(&uv, -inner / (sigma * sigma))?;
                Ok(grad_w)
            }
        }
    }

    /// Reverse-mode step through `M = P·W`, `P = Σ c_k (G−I)^k`, `G = WWᵀ`:
    ///
    ///   grad_W = Pᵀ·grad_M + (grad_G + grad_Gᵀ)·W
    ///   grad_G = Σ_k c_k Σ_{j+l=k−1} (G−I)^j · (grad_M·Wᵀ) · (G−I)^l
    ///
    /// where the `(grad_G + grad_Gᵀ)` symmetrisation accounts for the
    /// `G = WWᵀ` dependency.
    fn product_backward(
        &self,
        cache: &AonForwardCache<R>,
        w: &Matrix<R>,
        grad_m: &Matrix<R>,
    ) -> Result<Matrix<R>> {
        let m = w.rows();
        let mut grad_w = cache.p.transpose().matmul(grad_m)?;
        if self.q == 0 {
            return Ok(grad_w);
        }

        let coeffs = taylor_coeffs::<R>(self.q);
        let shifted = cache.g.sub(&Matrix::identity(m))?;
        let mut powers: Vec<Matrix<R>> = Vec::with_capacity(self.q);
        powers.push(Matrix::identity(m));
        for k in 1..self.q {
            let next = powers[k - 1].matmul(&shifted)?;
            powers.push(next);
        }

        let grad_p = grad_m.matmul(&w.transpose())?;
        let left: Vec<Matrix<R>> = powers
            .iter()
            .map(|a| a.matmul(&grad_p))
            .collect::<Result<_>>()?;

        let mut grad_g = Matrix::zeros(m, m);
        for k in 1..=self.q {
            let ck = coeffs.as_slice()[k];
            for j in 0..k {
                let term = left[j].matmul(&powers[k - 1 - j])?;
                grad_g.add_scaled(&term, ck)?;
            }
        }

        let sym = grad_g.add(&grad_g.transpose())?;
        grad_w = grad_w.add(&sym.matmul(w)?)?;
        Ok(grad_w)
    }

    /// Caches the current fixed-state transform for inference. Idempotent:
    /// freezing a frozen parameter keeps the existing cache, and later
    /// mutations of `w` do not refresh it.
    pub fn freeze(&mut self) -> Result<()> {
        if self.frozen_h.is_none() {
            let h = self.forward_fixed()?;
            self.frozen_h = Some(h);
        }
        Ok(())
    }
}

/// Per-element scaling `z̃_i = γ_i · z_i` applied to a layer output.
pub fn apply_gamma<R: Scalar>(z: &Vector<R>, gamma: &Vector<R>) -> Result<Vector<R>> {
    if z.len() != gamma.len() {
        return Err(AonError::ShapeMismatch {
            op: "apply_gamma",
            expected: format!("length {}", z.len()),
            got: format!("length {}", gamma.len()),
        });
    }
    Ok(Vector::from_vec(
        z.as_slice()
            .iter()
            .zip(gamma.as_slice())
            .map(|(a, b)| *a * *b)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm_oracle;
    use crate::orthopoly::approximation_error;
    use crate::testsupport::{matrix_with_gram_spectrum, random_matrix, test_rng};

    fn converged(param: &mut AonParam) {
        // σ estimates rise monotonically and geometrically on a fixed
        // matrix, so a vanishing increment means the estimate has settled.
        // When the top singular values nearly coincide the increments can
        // stall, but then the estimate already sits within the (tiny) gap,
        // so capping the loop is safe.
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..50_000 {
            let (_, cache) = param.forward().unwrap();
            if (cache.sigma - prev).abs() < 1e-14 {
                return;
            }
            prev = cache.sigma;
        }
    }

    #[test]
    fn orthonormal_rows_pass_through() {
        let mut rng = test_rng(3);
        let w = matrix_with_gram_spectrum(&mut rng, 3, 5, &[1.0; 3]);
        let mut param = AonParam::new(w.clone(), 2, 42);
        converged(&mut param);
        let (h, cache) = param.forward().unwrap();
        assert!((cache.sigma - 1.0).abs() < 1e-9);
        assert!(h.sub(&w).unwrap().frobenius_norm() < 1e-9);
    }

    #[test]
    fn q0_reduces_to_spectral_normalisation() {
        let mut rng = test_rng(5);
        let w = random_matrix(&mut rng, 4, 6);
        let mut param = AonParam::new(w.clone(), 0, 7);
        converged(&mut param);
        let (h, cache) = param.forward().unwrap();
        let direct = w.scale(1.0 / cache.sigma);
        assert_eq!(h, direct, "q=0 must be bitwise plain SN");
        assert!((cache.sigma - spectral_norm_oracle(&w)).abs() < 1e-9);
    }

    #[test]
    fn diagonal_case_matches_scalar_evaluation() {
        let w = Matrix::diagonal(&[0.5_f64.sqrt(), 1.5_f64.sqrt()]);
        let mut param = AonParam::new(w, 2, 11);
        converged(&mut param);
        let (h, cache) = param.forward().unwrap();
        let m00 = 0.5_f64.sqrt() * 1.34375;
        let m11 = 1.5_f64.sqrt() * 0.84375;
        assert!((cache.product.get(0, 0) - m00).abs() < 1e-12);
        assert!((cache.product.get(1, 1) - m11).abs() < 1e-12);
        assert!((cache.sigma - m11).abs() < 1e-9, "larger diagonal dominates");
        assert!((h.get(0, 0) - m00 / m11).abs() < 1e-9);
        assert!((h.get(1, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transform_spectral_norm_near_one() {
        let mut rng = test_rng(7);
        for trial in 0..10 {
            let eigs: Vec<f64> = (0..4)
                .map(|_| rand::Rng::random_range(&mut rng, 0.5..1.5))
                .collect();
            let w = matrix_with_gram_spectrum(&mut rng, 4, 8, &eigs);
            let mut param = AonParam::new(w, 2, trial);
            converged(&mut param);
            let (h, _) = param.forward().unwrap();
            let sn = spectral_norm_oracle(&h);
            assert!((sn - 1.0).abs() < 1e-3, "trial {trial}: σ(h) = {sn}");
        }
    }

    #[test]
    fn row_gram_matches_scaled_identity_bound() {
        let mut rng = test_rng(9);
        for trial in 0..10 {
            let eigs: Vec<f64> = (0..4)
                .map(|_| rand::Rng::random_range(&mut rng, 0.5..1.5))
                .collect();
            let w = matrix_with_gram_spectrum(&mut rng, 4, 8, &eigs);
            let err = approximation_error(&w, 2).unwrap();
            let mut param = AonParam::new(w, 2, trial + 100);
            // the bound holds for whatever σ the forward used, converged or not
            for _ in 0..200 {
                let _ = param.forward().unwrap();
            }
            let (h, cache) = param.forward().unwrap();
            let hht = h.gram();
            let target = Matrix::identity(4).scale(1.0 / (cache.sigma * cache.sigma));
            let dev = hht.sub(&target).unwrap().frobenius_norm();
            assert!(
                dev < err / (cache.sigma * cache.sigma) + 1e-9,
                "trial {trial}: {dev} vs bound"
            );
        }
    }

    #[test]
    fn deviation_improves_over_sn_baseline() {
        let mut rng = test_rng(13);
        for trial in 0..10 {
            let eigs: Vec<f64> = (0..5)
                .map(|_| rand::Rng::random_range(&mut rng, 0.5..1.5))
                .collect();
            let w = matrix_with_gram_spectrum(&mut rng, 5, 10, &eigs);
            let e0 = approximation_error(&w, 0).unwrap();
            for q in [2, 4] {
                let eq = approximation_error(&w, q).unwrap();
                assert!(eq < e0, "trial {trial} q={q}: {eq} !< {e0}");
            }
        }
    }

    #[test]
    fn pre_sn_orthonormal_passthrough() {
        let mut rng = test_rng(17);
        let w = matrix_with_gram_spectrum(&mut rng, 3, 6, &[1.0; 3]);
        let mut param = AonParam::with_mode(w.clone(), 2, 5, AonMode::PreSn);
        converged(&mut param);
        let (h, cache) = param.forward().unwrap();
        assert!((cache.sigma - 1.0).abs() < 1e-9);
        assert!(h.sub(&w).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn pre_sn_q0_equals_standard_q0() {
        let mut rng = test_rng(19);
        let w = random_matrix(&mut rng, 3, 5);
        let mut a = AonParam::with_mode(w.clone(), 0, 21, AonMode::PreSn);
        let mut b = AonParam::with_mode(w, 0, 21, AonMode::Standard);
        for _ in 0..50 {
            let (ha, _) = a.forward().unwrap();
            let (hb, _) = b.forward().unwrap();
            assert!(ha.sub(&hb).unwrap().frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn pre_sn_diagonal_case_matches_scalar_evaluation() {
        // σ(W) = sqrt(1.5); ŵ = diag(sqrt(1/3), 1); p2 at 1/3 and 1
        let w = Matrix::diagonal(&[0.5_f64.sqrt(), 1.5_f64.sqrt()]);
        let mut param = AonParam::with_mode(w, 2, 23, AonMode::PreSn);
        converged(&mut param);
        let (h, cache) = param.forward().unwrap();
        assert!((cache.sigma - 1.5_f64.sqrt()).abs() < 1e-9);
        let p2 = |x: f64| 1.0 - 0.5 * (x - 1.0) + 0.375 * (x - 1.0) * (x - 1.0);
        let expect00 = (1.0f64 / 3.0).sqrt() * p2(1.0 / 3.0);
        assert!((h.get(0, 0) - expect00).abs() < 1e-9, "{}", h.get(0, 0));
        assert!((h.get(1, 1) - p2(1.0)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_zero_weight_is_an_error() {
        let mut param: AonParam = AonParam::new(Matrix::zeros(2, 3), 2, 1);
        assert!(matches!(param.forward(), Err(AonError::DegenerateWeight)));
        let mut pre: AonParam = AonParam::with_mode(Matrix::zeros(2, 3), 2, 1, AonMode::PreSn);
        assert!(matches!(pre.forward(), Err(AonError::DegenerateWeight)));
    }

    #[test]
    fn scale_invariant_1x1_gradient_is_zero() {
        let w: Matrix = Matrix::from_rows(&[&[2.0]]);
        let mut param = AonParam::new(w, 0, 1);
        let (_, cache) = param.forward().unwrap();
        let grad_h = Matrix::from_rows(&[&[1.0]]);
        let grad_w = param.backward(&cache, &grad_h).unwrap();
        assert!(grad_w.get(0, 0).abs() < 1e-15);
    }

    #[test]
    fn linear_loss_q0_gradient_matches_hand_expansion() {
        let mut rng = test_rng(29);
        let w = random_matrix(&mut rng, 3, 4);
        let a = random_matrix(&mut rng, 3, 4);
        let mut param = AonParam::new(w.clone(), 0, 31);
        converged(&mut param);
        let (_, cache) = param.forward().unwrap();
        let grad = param.backward(&cache, &a).unwrap();
        let sigma = cache.sigma;
        let inner = a.frobenius_dot(&w).unwrap();
        let mut expected = a.scale(1.0 / sigma);
        expected
            .add_scaled(&outer(&param.state.u, &param.state.v), -inner / (sigma * sigma))
            .unwrap();
        assert!(grad.sub(&expected).unwrap().frobenius_norm() < 1e-12);
    }

    /// Central finite differences of the fixed-state forward under the
    /// linear loss `⟨A, h⟩`, the independent oracle for the backward pass.
    fn fd_grad(param: &AonParam, a: &Matrix, step: f64) -> Matrix {
        let mut probe = param.clone();
        let mut grad = Matrix::zeros(param.rows(), param.cols());
        for idx in 0..param.rows() * param.cols() {
            let orig = probe.w.data()[idx];
            probe.w.data_mut()[idx] = orig + step;
            let plus = probe
                .forward_fixed()
                .unwrap()
                .frobenius_dot(a)
                .unwrap();
            probe.w.data_mut()[idx] = orig - step;
            let minus = probe
                .forward_fixed()
                .unwrap()
                .frobenius_dot(a)
                .unwrap();
            probe.w.data_mut()[idx] = orig;
            grad.data_mut()[idx] = (plus - minus) / (2.0 * step);
        }
        grad
    }

    fn check_fd(mode: AonMode, q: usize, rows: usize, cols: usize, seed: u64) {
        let mut rng = test_rng(seed);
        let w = random_matrix(&mut rng, rows, cols).scale(0.6);
        let a = random_matrix(&mut rng, rows, cols);
        let mut param = AonParam::with_mode(w, q, seed + 1, mode);
        for _ in 0..50 {
            let _ = param.forward().unwrap();
        }
        let (_, cache) = param.forward_fixed_with_cache().unwrap();
        let analytic = param.backward(&cache, &a).unwrap();
        let numeric = fd_grad(&param, &a, 1e-5);
        let rel = analytic.sub(&numeric).unwrap().frobenius_norm()
            / analytic
                .frobenius_norm()
                .max(numeric.frobenius_norm())
                .max(1e-10);
        assert!(
            rel < 1e-5,
            "mode {mode:?} q={q} shape {rows}x{cols}: rel error {rel}"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for q in [0, 1, 2, 4] {
            check_fd(AonMode::Standard, q, 4, 6, 100 + q as u64); // wide
            check_fd(AonMode::Standard, q, 6, 4, 200 + q as u64); // tall, singular G
            check_fd(AonMode::Standard, q, 5, 5, 300 + q as u64);
        }
    }

    #[test]
    fn pre_sn_gradient_matches_finite_differences() {
        for q in [0, 2, 4] {
            check_fd(AonMode::PreSn, q, 4, 6, 400 + q as u64);
            check_fd(AonMode::PreSn, q, 6, 4, 500 + q as u64);
        }
    }

    #[test]
    fn backward_shape_mismatch() {
        let mut rng = test_rng(31);
        let w = random_matrix(&mut rng, 3, 4);
        let mut param = AonParam::new(w, 2, 1);
        let (_, cache) = param.forward().unwrap();
        let bad = Matrix::zeros(4, 3);
        assert!(matches!(
            param.backward(&cache, &bad),
            Err(AonError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn apply_gamma_cases() {
        let z = Vector::from_slice(&[1.0, 2.0]);
        assert_eq!(
            apply_gamma(&z, &Vector::ones(2)).unwrap().as_slice(),
            &[1.0, 2.0]
        );
        assert_eq!(
            apply_gamma(&z, &Vector::zeros(2)).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        let g = Vector::from_slice(&[3.0, -1.0]);
        assert_eq!(apply_gamma(&z, &g).unwrap().as_slice(), &[3.0, -2.0]);
        assert!(apply_gamma(&z, &Vector::ones(3)).is_err());
    }

    #[test]
    fn freeze_caches_and_pins_output() {
        let mut rng = test_rng(37);
        let w = random_matrix(&mut rng, 3, 5);
        let mut param = AonParam::new(w, 2, 3);
        for _ in 0..50 {
            let _ = param.forward().unwrap();
        }
        param.freeze().unwrap();
        let h1 = param.forward_fixed().unwrap();
        let h2 = param.forward_fixed().unwrap();
        assert_eq!(h1, h2, "bitwise stable after freeze");
        assert!(matches!(param.forward(), Err(AonError::FrozenParam)));

        // freezing twice keeps the cache
        let cached = param.frozen_h.clone().unwrap();
        param.freeze().unwrap();
        assert_eq!(param.frozen_h.as_ref().unwrap(), &cached);

        // mutate w: the frozen output is documented to stay stale
        param.w.data_mut()[0] += 10.0;
        let h3 = param.forward_fixed().unwrap();
        assert_eq!(h1, h3);
    }

    #[test]
    fn freeze_orthonormal_rows_stores_w() {
        let mut rng = test_rng(41);
        let w = matrix_with_gram_spectrum(&mut rng, 3, 6, &[1.0; 3]);
        let mut param = AonParam::new(w.clone(), 2, 9);
        for _ in 0..200 {
            let _ = param.forward().unwrap();
        }
        param.freeze().unwrap();
        let frozen = param.frozen_h.as_ref().unwrap();
        assert!(frozen.sub(&w).unwrap().frobenius_norm() < 1e-8);
    }
}
