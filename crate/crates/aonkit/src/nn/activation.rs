//! ReLU and 2x2 max-pooling.

use crate::error::{AonError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Elementwise `max(0, x)` over a flat buffer; the mask records which
/// entries passed.
pub(super) fn relu_forward<R: Scalar>(data: &[R]) -> (Vec<R>, Vec<bool>) {
    let mut out = Vec::with_capacity(data.len());
    let mut mask = Vec::with_capacity(data.len());
    for &x in data {
        let pass = x > R::zero();
        mask.push(pass);
        out.push(if pass { x } else { R::zero() });
    }
    (out, mask)
}

pub(super) fn relu_backward<R: Scalar>(grad: &[R], mask: &[bool]) -> Vec<R> {
    grad.iter()
        .zip(mask)
        .map(|(g, &m)| if m { *g } else { R::zero() })
        .collect()
}

/// 2x2 max-pool with stride 2. Height and width must be even.
pub(super) fn maxpool2_forward<R: Scalar>(x: &Tensor4<R>) -> Result<(Tensor4<R>, Vec<usize>)> {
    let [b, c, h, w] = x.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(AonError::ShapeMismatch {
            op: "maxpool2_forward",
            expected: "even spatial dimensions".into(),
            got: format!("{h}x{w}"),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([b, c, oh, ow]);
    let mut argmax = vec![0usize; b * c * oh * ow];
    let mut k = 0;
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = R::neg_infinity();
                    let mut best_idx = 0;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let idx = x.index(bi, ci, 2 * i + di, 2 * j + dj);
                            let v = x.data()[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    out.set(bi, ci, i, j, best);
                    argmax[k] = best_idx;
                    k += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub(super) fn maxpool2_backward<R: Scalar>(
    grad: &Tensor4<R>,
    argmax: &[usize],
    in_dims: [usize; 4],
) -> Tensor4<R> {
    let mut out = Tensor4::zeros(in_dims);
    for (g, &idx) in grad.data().iter().zip(argmax) {
        out.data_mut()[idx] = out.data_mut()[idx] + *g;
    }
    out
}
