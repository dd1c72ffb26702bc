//! Fully connected layer with optional orthonormal normalisation.
//!
//! The layer computes `z = h(W)·v` per sample (or `W·v` in plain mode),
//! scales per output element with `γ` and optionally adds a bias. Bias is
//! off by default; when batch normalisation follows, its shift plays that
//! role.

use crate::aon::{AonForwardCache, AonMode, AonParam};
use crate::error::{AonError, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

use super::ForwardMode;

/// Weight-handling mode of a dense or convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Raw weight matrix.
    Plain,
    /// Spectral normalisation only (the `q = 0` transform).
    SnOnly,
    /// Full transform at a caller-chosen Taylor order.
    Aon,
}

/// The weight storage behind a layer: either a raw matrix with its own
/// per-row scaling, or a normalised parameter (which carries `γ` itself).
#[derive(Debug, Clone, PartialEq)]
pub enum DenseKind<R: Scalar = f64> {
    Plain { weight: Matrix<R>, gamma: Vector<R> },
    Normalized(AonParam<R>),
}

impl<R: Scalar> DenseKind<R> {
    pub fn weight(&self) -> &Matrix<R> {
        match self {
            DenseKind::Plain { weight, .. } => weight,
            DenseKind::Normalized(p) => &p.w,
        }
    }

    pub fn gamma(&self) -> &Vector<R> {
        match self {
            DenseKind::Plain { gamma, .. } => gamma,
            DenseKind::Normalized(p) => &p.gamma,
        }
    }

    fn gamma_mut(&mut self) -> &mut Vector<R> {
        match self {
            DenseKind::Plain { gamma, .. } => gamma,
            DenseKind::Normalized(p) => &mut p.gamma,
        }
    }

    /// Effective transform for this forward, plus the backward cache when
    /// the mode allows gradients.
    pub(super) fn effective(
        &mut self,
        mode: ForwardMode,
    ) -> Result<(Matrix<R>, Option<AonForwardCache<R>>)> {
        match self {
            DenseKind::Plain { weight, .. } => Ok((weight.clone(), None)),
            DenseKind::Normalized(p) => match mode {
                ForwardMode::Train => {
                    let (h, cache) = p.forward()?;
                    Ok((h, Some(cache)))
                }
                ForwardMode::Probe => {
                    let (h, cache) = p.forward_fixed_with_cache()?;
                    Ok((h, Some(cache)))
                }
                ForwardMode::Eval => Ok((p.forward_fixed()?, None)),
            },
        }
    }

    pub(super) fn weight_grad(
        &self,
        aon_cache: &Option<AonForwardCache<R>>,
        grad_h: &Matrix<R>,
    ) -> Result<Vec<R>> {
        match self {
            DenseKind::Plain { .. } => Ok(grad_h.data().to_vec()),
            DenseKind::Normalized(p) => {
                let cache = aon_cache.as_ref().ok_or(AonError::FrozenParam)?;
                Ok(p.backward(cache, grad_h)?.data().to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<R: Scalar = f64> {
    pub kind: DenseKind<R>,
    pub bias: Option<Vector<R>>,
    pub use_gamma: bool,
}

#[derive(Debug, Clone)]
pub struct DenseCache<R: Scalar = f64> {
    pub(super) input: Matrix<R>,
    pub(super) h: Matrix<R>,
    pub(super) pre_gamma: Matrix<R>,
    pub(super) aon: Option<AonForwardCache<R>>,
}

impl<R: Scalar> DenseLayer<R> {
    pub fn plain(weight: Matrix<R>) -> Self {
        let gamma = Vector::ones(weight.rows());
        Self {
            kind: DenseKind::Plain { weight, gamma },
            bias: None,
            use_gamma: true,
        }
    }

    pub fn normalized(weight: Matrix<R>, q: usize, seed: u64, mode: AonMode) -> Self {
        Self {
            kind: DenseKind::Normalized(AonParam::with_mode(weight, q, seed, mode)),
            bias: None,
            use_gamma: true,
        }
    }

    pub fn with_bias(mut self) -> Self {
        let m = self.kind.weight().rows();
        self.bias = Some(Vector::zeros(m));
        self
    }

    pub fn without_gamma(mut self) -> Self {
        self.use_gamma = false;
        self
    }

    pub fn out_dim(&self) -> usize {
        self.kind.weight().rows()
    }

    pub fn in_dim(&self) -> usize {
        self.kind.weight().cols()
    }

    /// Batched forward: rows of `x` are samples.
    pub fn forward(
        &mut self,
        x: &Matrix<R>,
        mode: ForwardMode,
    ) -> Result<(Matrix<R>, DenseCache<R>)> {
        if x.cols() != self.in_dim() {
            return Err(AonError::ShapeMismatch {
                op: "dense_forward",
                expected: format!("input width {}", self.in_dim()),
                got: format!("width {}", x.cols()),
            });
        }
        let (h, aon) = self.kind.effective(mode)?;
        let z = x.matmul(&h.transpose())?;
        let mut out = z.clone();
        if self.use_gamma {
            let gamma = self.kind.gamma().as_slice().to_vec();
            for b in 0..out.rows() {
                for (i, g) in gamma.iter().enumerate() {
                    out.set(b, i, out.get(b, i) * *g);
                }
            }
        }
        if let Some(bias) = &self.bias {
            for b in 0..out.rows() {
                for (i, v) in bias.as_slice().iter().enumerate() {
                    out.set(b, i, out.get(b, i) + *v);
                }
            }
        }
        Ok((
            out,
            DenseCache {
                input: x.clone(),
                h,
                pre_gamma: z,
                aon,
            },
        ))
    }

    /// Returns the gradient w.r.t. the input and the parameter gradients
    /// in [`Self::param_slices`] order.
    pub fn backward(
        &self,
        grad_out: &Matrix<R>,
        cache: &DenseCache<R>,
    ) -> Result<(Matrix<R>, Vec<Vec<R>>)> {
        let m = self.out_dim();
        let batch = grad_out.rows();

        let mut grad_bias = self.bias.as_ref().map(|_| vec![R::zero(); m]);
        if let Some(gb) = grad_bias.as_mut() {
            for b in 0..batch {
                for (i, g) in gb.iter_mut().enumerate() {
                    *g = *g + grad_out.get(b, i);
                }
            }
        }

        let (grad_z, grad_gamma) = if self.use_gamma {
            let gamma = self.kind.gamma().as_slice();
            let mut gg = vec![R::zero(); m];
            let mut gz = Matrix::zeros(batch, m);
            for b in 0..batch {
                for i in 0..m {
                    let go = grad_out.get(b, i);
                    gg[i] = gg[i] + go * cache.pre_gamma.get(b, i);
                    gz.set(b, i, go * gamma[i]);
                }
            }
            (gz, Some(gg))
        } else {
            (grad_out.clone(), None)
        };

        let grad_h = grad_z.transpose().matmul(&cache.input)?;
        let grad_x = grad_z.matmul(&cache.h)?;
        let grad_w = self.kind.weight_grad(&cache.aon, &grad_h)?;

        let mut grads = vec![grad_w];
        if let Some(gg) = grad_gamma {
            grads.push(gg);
        }
        if let Some(gb) = grad_bias {
            grads.push(gb);
        }
        Ok((grad_x, grads))
    }

    /// Trainable parameters: weight, then `γ` (when enabled), then bias.
    pub fn param_slices(&self) -> Vec<&[R]> {
        let mut v: Vec<&[R]> = vec![self.kind.weight().data()];
        if self.use_gamma {
            v.push(self.kind.gamma().as_slice());
        }
        if let Some(b) = &self.bias {
            v.push(b.as_slice());
        }
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [R]> {
        let use_gamma = self.use_gamma;
        let (weight, gamma): (&mut Matrix<R>, &mut Vector<R>) = match &mut self.kind {
            DenseKind::Plain { weight, gamma } => (weight, gamma),
            DenseKind::Normalized(p) => (&mut p.w, &mut p.gamma),
        };
        let mut v: Vec<&mut [R]> = vec![weight.data_mut()];
        if use_gamma {
            v.push(gamma.as_mut_slice());
        }
        if let Some(b) = &mut self.bias {
            v.push(b.as_mut_slice());
        }
        v
    }

    pub fn set_gamma(&mut self, gamma: Vector<R>) {
        *self.kind.gamma_mut() = gamma;
    }

    pub fn freeze(&mut self) -> Result<()> {
        if let DenseKind::Normalized(p) = &mut self.kind {
            p.freeze()?;
        }
        Ok(())
    }
}
