//! 2-D convolution (cross-correlation) with optional normalised weights.
//!
//! The kernel tensor `d_o x d_i x kh x kw` is stored as its reshaped
//! `d_o x (d_i·kh·kw)` matrix so the normalisation applies directly; the
//! forward runs as im2col followed by one matrix product. No kernel flip
//! is performed (the usual deep-learning convention).

use crate::aon::{AonForwardCache, AonMode, AonParam};
use crate::error::{AonError, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;
use crate::tensor::{conv_unreshape, Tensor4};

use super::dense::DenseKind;
use super::ForwardMode;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<R: Scalar = f64> {
    pub kind: DenseKind<R>,
    pub bias: Option<Vector<R>>,
    pub use_gamma: bool,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache<R: Scalar = f64> {
    cols: Matrix<R>,
    h: Matrix<R>,
    pre_gamma: Matrix<R>,
    aon: Option<AonForwardCache<R>>,
    in_dims: [usize; 4],
    out_hw: (usize, usize),
}

impl<R: Scalar> ConvLayer<R> {
    /// Plain convolution from a kernel tensor.
    pub fn plain(weight: Tensor4<R>, stride: usize, padding: usize) -> Self {
        let [d_o, d_i, kh, kw] = weight.dims();
        let matrix = crate::tensor::conv_reshape(&weight);
        Self {
            kind: DenseKind::Plain {
                weight: matrix,
                gamma: Vector::ones(d_o),
            },
            bias: None,
            use_gamma: true,
            in_channels: d_i,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
        }
    }

    /// Normalised convolution: the transform acts on the reshaped kernel.
    pub fn normalized(
        weight: Tensor4<R>,
        q: usize,
        seed: u64,
        mode: AonMode,
        stride: usize,
        padding: usize,
    ) -> Self {
        let [_, d_i, kh, kw] = weight.dims();
        let matrix = crate::tensor::conv_reshape(&weight);
        Self {
            kind: DenseKind::Normalized(AonParam::with_mode(matrix, q, seed, mode)),
            bias: None,
            use_gamma: true,
            in_channels: d_i,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
        }
    }

    pub fn with_bias(mut self) -> Self {
        let d_o = self.out_channels();
        self.bias = Some(Vector::zeros(d_o));
        self
    }

    pub fn without_gamma(mut self) -> Self {
        self.use_gamma = false;
        self
    }

    pub fn out_channels(&self) -> usize {
        self.kind.weight().rows()
    }

    /// Current kernel as a tensor (unreshaped raw weight).
    pub fn kernel(&self) -> Tensor4<R> {
        let d_o = self.out_channels();
        conv_unreshape(
            self.kind.weight(),
            [d_o, self.in_channels, self.kernel_h, self.kernel_w],
        )
        .expect("kernel dims are consistent by construction")
    }

    fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let padded_h = h + 2 * self.padding;
        let padded_w = w + 2 * self.padding;
        if padded_h < self.kernel_h || padded_w < self.kernel_w {
            return Err(AonError::ShapeMismatch {
                op: "conv_forward",
                expected: format!("input at least {}x{}", self.kernel_h, self.kernel_w),
                got: format!("{padded_h}x{padded_w} after padding"),
            });
        }
        Ok((
            (padded_h - self.kernel_h) / self.stride + 1,
            (padded_w - self.kernel_w) / self.stride + 1,
        ))
    }

    /// im2col: one row per output position, patch entries ordered
    /// channel-major then kernel row, kernel column — the same layout as
    /// the reshaped kernel matrix.
    fn im2col(&self, x: &Tensor4<R>, oh: usize, ow: usize) -> Matrix<R> {
        let [b, c, h, w] = x.dims();
        let patch = c * self.kernel_h * self.kernel_w;
        let mut cols = Matrix::zeros(b * oh * ow, patch);
        for bi in 0..b {
            for i in 0..oh {
                for j in 0..ow {
                    let row = (bi * oh + i) * ow + j;
                    let mut cidx = 0;
                    for ci in 0..c {
                        for ki in 0..self.kernel_h {
                            for kj in 0..self.kernel_w {
                                let yi = (i * self.stride + ki) as isize - self.padding as isize;
                                let xj = (j * self.stride + kj) as isize - self.padding as isize;
                                let v = if yi >= 0 && (yi as usize) < h && xj >= 0 && (xj as usize) < w
                                {
                                    x.get(bi, ci, yi as usize, xj as usize)
                                } else {
                                    R::zero()
                                };
                                cols.set(row, cidx, v);
                                cidx += 1;
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(
        &mut self,
        x: &Tensor4<R>,
        mode: ForwardMode,
    ) -> Result<(Tensor4<R>, ConvCache<R>)> {
        let [b, c, h, w] = x.dims();
        if c != self.in_channels {
            return Err(AonError::ShapeMismatch {
                op: "conv_forward",
                expected: format!("{} channels", self.in_channels),
                got: format!("{c} channels"),
            });
        }
        let (oh, ow) = self.out_size(h, w)?;
        let cols = self.im2col(x, oh, ow);
        let (heff, aon) = self.kind.effective(mode)?;
        let z = cols.matmul(&heff.transpose())?; // (B·OH·OW) x d_o
        let d_o = self.out_channels();

        let mut scaled = z.clone();
        if self.use_gamma {
            let gamma = self.kind.gamma().as_slice().to_vec();
            for r in 0..scaled.rows() {
                for (o, g) in gamma.iter().enumerate() {
                    scaled.set(r, o, scaled.get(r, o) * *g);
                }
            }
        }
        if let Some(bias) = &self.bias {
            for r in 0..scaled.rows() {
                for (o, v) in bias.as_slice().iter().enumerate() {
                    scaled.set(r, o, scaled.get(r, o) + *v);
                }
            }
        }

        let mut out = Tensor4::zeros([b, d_o, oh, ow]);
        for bi in 0..b {
            for o in 0..d_o {
                for i in 0..oh {
                    for j in 0..ow {
                        let row = (bi * oh + i) * ow + j;
                        out.set(bi, o, i, j, scaled.get(row, o));
                    }
                }
            }
        }

        Ok((
            out,
            ConvCache {
                cols,
                h: heff,
                pre_gamma: z,
                aon,
                in_dims: [b, c, h, w],
                out_hw: (oh, ow),
            },
        ))
    }

    pub fn backward(
        &self,
        grad_out: &Tensor4<R>,
        cache: &ConvCache<R>,
    ) -> Result<(Tensor4<R>, Vec<Vec<R>>)> {
        let [b, _, _, _] = cache.in_dims;
        let (oh, ow) = cache.out_hw;
        let d_o = self.out_channels();

        // gather the tensor gradient back into im2col row order
        let mut grad_flat = Matrix::zeros(b * oh * ow, d_o);
        for bi in 0..b {
            for o in 0..d_o {
                for i in 0..oh {
                    for j in 0..ow {
                        let row = (bi * oh + i) * ow + j;
                        grad_flat.set(row, o, grad_out.get(bi, o, i, j));
                    }
                }
            }
        }

        let mut grad_bias = self.bias.as_ref().map(|_| vec![R::zero(); d_o]);
        if let Some(gb) = grad_bias.as_mut() {
            for r in 0..grad_flat.rows() {
                for (o, g) in gb.iter_mut().enumerate() {
                    *g = *g + grad_flat.get(r, o);
                }
            }
        }

        let (grad_z, grad_gamma) = if self.use_gamma {
            let gamma = self.kind.gamma().as_slice();
            let mut gg = vec![R::zero(); d_o];
            let mut gz = Matrix::zeros(grad_flat.rows(), d_o);
            for r in 0..grad_flat.rows() {
                for o in 0..d_o {
                    let go = grad_flat.get(r, o);
                    gg[o] = gg[o] + go * cache.pre_gamma.get(r, o);
                    gz.set(r, o, go * gamma[o]);
                }
            }
            (gz, Some(gg))
        } else {
            (grad_flat, None)
        };

        let grad_h = grad_z.transpose().matmul(&cache.cols)?;
        let grad_cols = grad_z.matmul(&cache.h)?;
        let grad_w = self.kind.weight_grad(&cache.aon, &grad_h)?;

        // col2im scatter-add
        let [bb, c, h, w] = cache.in_dims;
        let mut grad_x = Tensor4::zeros([bb, c, h, w]);
        for bi in 0..bb {
            for i in 0..oh {
                for j in 0..ow {
                    let row = (bi * oh + i) * ow + j;
                    let mut cidx = 0;
                    for ci in 0..c {
                        for ki in 0..self.kernel_h {
                            for kj in 0..self.kernel_w {
                                let yi = (i * self.stride + ki) as isize - self.padding as isize;
                                let xj = (j * self.stride + kj) as isize - self.padding as isize;
                                if yi >= 0 && (yi as usize) < h && xj >= 0 && (xj as usize) < w {
                                    let idx = grad_x.index(bi, ci, yi as usize, xj as usize);
                                    grad_x.data_mut()[idx] =
                                        grad_x.data_mut()[idx] + grad_cols.get(row, cidx);
                                }
                                cidx += 1;
                            }
                        }
                    }
                }
            }
        }

        let mut grads = vec![grad_w];
        if let Some(gg) = grad_gamma {
            grads.push(gg);
        }
        if let Some(gb) = grad_bias {
            grads.push(gb);
        }
        Ok((grad_x, grads))
    }

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

    pub fn freeze(&mut self) -> Result<()> {
        if let DenseKind::Normalized(p) = &mut self.kind {
            p.freeze()?;
        }
        Ok(())
    }
}
