//! 4-D tensors for convolutional weights and image batches.
//!
//! Layout is row-major over `[n0, n1, n2, n3]`; for activations that is
//! `batch x channels x height x width`, for kernels
//! `out_channels x in_channels x height x width`. A kernel tensor and its
//! `d_o x (d_i·h·w)` matrix view share the same flat layout, so the
//! reshape used by the normalised convolution is a lossless
//! reinterpretation.

use crate::error::{AonError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<R: Scalar = f64> {
    dims: [usize; 4],
    data: Vec<R>,
}

impl<R: Scalar> Tensor4<R> {
    pub fn new(dims: [usize; 4], data: Vec<R>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(AonError::ShapeMismatch {
                op: "Tensor4::new",
                expected: format!("{expect} entries"),
                got: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(AonError::NonFinite("Tensor4::new"));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![R::zero(); dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> usize {
        ((i0 * self.dims[1] + i1) * self.dims[2] + i2) * self.dims[3] + i3
    }

    #[inline]
    pub fn get(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> R {
        self.data[self.index(i0, i1, i2, i3)]
    }

    #[inline]
    pub fn set(&mut self, i0: usize, i1: usize, i2: usize, i3: usize, v: R) {
        let idx = self.index(i0, i1, i2, i3);
        self.data[idx] = v;
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }
}

/// Reshapes a `d_o x d_i x h x w` kernel into the `d_o x (d_i·h·w)`
/// matrix the normalisation operates on. Lossless: the flat buffer is
/// reused unchanged.
pub fn conv_reshape<R: Scalar>(weight: &Tensor4<R>) -> Matrix<R> {
    let [d_o, d_i, h, w] = weight.dims();
    Matrix::new(d_o, d_i * h * w, weight.data().to_vec())
        .expect("tensor data is finite and sized")
}

/// Inverse of [`conv_reshape`]; errors when the sizes disagree.
pub fn conv_unreshape<R: Scalar>(m: &Matrix<R>, dims: [usize; 4]) -> Result<Tensor4<R>> {
    let expect: usize = dims.iter().product();
    if m.rows() * m.cols() != expect || m.rows() != dims[0] {
        return Err(AonError::ShapeMismatch {
            op: "conv_unreshape",
            expected: format!("{}x{}", dims[0], dims[1] * dims[2] * dims[3]),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    Tensor4::new(dims, m.data().to_vec())
}
