//! Softmax cross-entropy loss.

use crate::error::{AonError, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;

/// Numerically stable log-softmax cross-entropy for one sample. Returns
/// the loss and its gradient `softmax(logits) − onehot(label)`.
pub fn softmax_cross_entropy<R: Scalar>(logits: &Vector<R>, label: usize) -> Result<(R, Vector<R>)> {
    let classes = logits.len();
    if label >= classes {
        return Err(AonError::InvalidLabel { label, classes });
    }
    let max = logits
        .as_slice()
        .iter()
        .fold(R::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<R> = logits.as_slice().iter().map(|&x| (x - max).exp()).collect();
    let sum = exps.iter().fold(R::zero(), |a, &b| a + b);
    let loss = -(logits.as_slice()[label] - max - sum.ln());
    let grad: Vec<R> = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let p = e / sum;
            if i == label {
                p - R::one()
            } else {
                p
            }
        })
        .collect();
    Ok((loss, Vector::from_vec(grad)))
}

/// Mean cross-entropy over a batch of logit rows; the returned gradient
/// already carries the `1/batch` factor.
pub fn softmax_cross_entropy_batch<R: Scalar>(
    logits: &Matrix<R>,
    labels: &[usize],
) -> Result<(R, Matrix<R>)> {
    if logits.rows() != labels.len() {
        return Err(AonError::ShapeMismatch {
            op: "softmax_cross_entropy_batch",
            expected: format!("{} labels", logits.rows()),
            got: format!("{} labels", labels.len()),
        });
    }
    let batch = logits.rows();
    let scale = R::one() / R::of(batch as f64);
    let mut total = R::zero();
    let mut grad = Matrix::zeros(batch, logits.cols());
    for (b, &label) in labels.iter().enumerate() {
        let row = Vector::from_slice(logits.row(b));
        let (loss, g) = softmax_cross_entropy(&row, label)?;
        total = total + loss;
        for (j, v) in g.as_slice().iter().enumerate() {
            grad.set(b, j, *v * scale);
        }
    }
    Ok((total * scale, grad))
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy<R: Scalar>(logits: &Matrix<R>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for (b, &label) in labels.iter().enumerate() {
        let row = logits.row(b);
        let mut best = 0usize;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}
