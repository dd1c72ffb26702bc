//! Dense row-major linear algebra used by every other module.
//!
//! `Matrix` and `Vector` are plain owned buffers; all operations are pure
//! functions of their inputs and free of hidden state, so values are safe
//! to share across threads once constructed. Entries are validated to be
//! finite on construction.
//!
//! [`spectral_norm_oracle`] and [`jacobi_eigen`] form a brute-force
//! spectral/eigen oracle. They are deterministic and independent of the
//! power-iteration code and exist to cross-check it; production paths do
//! not rely on them.

use crate::error::{AonError, Result};
use crate::scalar::Scalar;

/// Dense real matrix, row-major: `data[i * cols + j]` holds entry `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<R: Scalar = f64> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<R: Scalar = f64> {
    data: Vec<R>,
}

impl<R: Scalar> Matrix<R> {
    /// Creates a matrix from row-major data, checking length and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<R>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AonError::ShapeMismatch {
                op: "Matrix::new",
                expected: format!("{} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(AonError::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices. Panics on ragged or non-finite input.
    pub fn from_rows(rows: &[&[R]]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data).expect("finite row data")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![R::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = R::one();
        }
        m
    }

    /// Fills entry-by-entry from a generator over `(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Square matrix with `diag` on the diagonal.
    pub fn diagonal(diag: &[R]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { R::zero() })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix product `self · other` (i-k-j loop order for cache locality).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(AonError::ShapeMismatch {
                op: "matmul",
                expected: format!("inner dim {}", self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                let orow = k * other.cols;
                let dst = i * other.cols;
                for j in 0..other.cols {
                    out.data[dst + j] = out.data[dst + j] + aik * other.data[orow + j];
                }
            }
        }
        Ok(out)
    }

    /// Matrix–vector product `self · x`.
    pub fn matvec(&self, x: &Vector<R>) -> Result<Vector<R>> {
        if self.cols != x.len() {
            return Err(AonError::ShapeMismatch {
                op: "matvec",
                expected: format!("vector of length {}", self.cols),
                got: format!("length {}", x.len()),
            });
        }
        let mut out = vec![R::zero(); self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = R::zero();
            for (a, b) in row.iter().zip(x.as_slice()) {
                acc = acc + *a * *b;
            }
            *o = acc;
        }
        Ok(Vector::from_vec(out))
    }

    /// Transposed matrix–vector product `selfᵀ · x`.
    pub fn matvec_t(&self, x: &Vector<R>) -> Result<Vector<R>> {
        if self.rows != x.len() {
            return Err(AonError::ShapeMismatch {
                op: "matvec_t",
                expected: format!("vector of length {}", self.rows),
                got: format!("length {}", x.len()),
            });
        }
        let mut out = vec![R::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x.as_slice()[i];
            let row = self.row(i);
            for (o, a) in out.iter_mut().zip(row) {
                *o = *o + xi * *a;
            }
        }
        Ok(Vector::from_vec(out))
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(AonError::ShapeMismatch {
                op: "add",
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a + *b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(AonError::ShapeMismatch {
                op: "sub",
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a - *b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: R) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * *x).collect(),
        }
    }

    /// In-place `self += c · other`.
    pub fn add_scaled(&mut self, other: &Self, c: R) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(AonError::ShapeMismatch {
                op: "add_scaled",
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + c * *b;
        }
        Ok(())
    }

    /// Gram matrix `G = self · selfᵀ`, explicitly symmetrized as
    /// `(G + Gᵀ)/2` so downstream polynomial evaluation never sees
    /// floating-point asymmetry.
    pub fn gram(&self) -> Self {
        let m = self.rows;
        let mut g = Self::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let ri = self.row(i);
                let rj = self.row(j);
                let mut acc = R::zero();
                for (a, b) in ri.iter().zip(rj) {
                    acc = acc + *a * *b;
                }
                g.data[i * m + j] = acc;
                g.data[j * m + i] = acc;
            }
        }
        g
    }

    /// Frobenius norm `sqrt(sum of squared entries)`.
    pub fn frobenius_norm(&self) -> R {
        self.data
            .iter()
            .fold(R::zero(), |acc, x| acc + *x * *x)
            .sqrt()
    }

    /// Frobenius inner product `sum_ij self_ij · other_ij`.
    pub fn frobenius_dot(&self, other: &Self) -> Result<R> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(AonError::ShapeMismatch {
                op: "frobenius_dot",
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(R::zero(), |acc, (a, b)| acc + *a * *b))
    }

    /// Frobenius distance to the identity (matrix must be square).
    pub fn deviation_from_identity(&self) -> R {
        debug_assert_eq!(self.rows, self.cols);
        let mut acc = R::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = if i == j {
                    self.get(i, j) - R::one()
                } else {
                    self.get(i, j)
                };
                acc = acc + d * d;
            }
        }
        acc.sqrt()
    }
}

impl<R: Scalar> Vector<R> {
    /// Creates a vector, checking finiteness.
    pub fn new(data: Vec<R>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(AonError::NonFinite("Vector::new"));
        }
        Ok(Self { data })
    }

    /// Wraps a buffer without the finiteness check (internal results).
    pub fn from_vec(data: Vec<R>) -> Self {
        Self { data }
    }

    pub fn from_slice(data: &[R]) -> Self {
        Self {
            data: data.to_vec(),
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![R::zero(); len],
        }
    }

    pub fn ones(len: usize) -> Self {
        Self {
            data: vec![R::one(); len],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[R] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn dot(&self, other: &Self) -> Result<R> {
        if self.len() != other.len() {
            return Err(AonError::ShapeMismatch {
                op: "dot",
                expected: format!("length {}", self.len()),
                got: format!("length {}", other.len()),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(R::zero(), |acc, (a, b)| acc + *a * *b))
    }

    pub fn norm2(&self) -> R {
        self.data
            .iter()
            .fold(R::zero(), |acc, x| acc + *x * *x)
            .sqrt()
    }

    /// Returns the unit vector `self / ‖self‖₂`, or `None` when the norm
    /// falls below `floor`.
    pub fn normalized(&self, floor: R) -> Option<Self> {
        let n = self.norm2();
        if n < floor {
            return None;
        }
        Some(Self {
            data: self.data.iter().map(|x| *x / n).collect(),
        })
    }
}

/// Outer product `u · vᵀ`.
pub fn outer<R: Scalar>(u: &Vector<R>, v: &Vector<R>) -> Matrix<R> {
    Matrix::from_fn(u.len(), v.len(), |i, j| u.as_slice()[i] * v.as_slice()[j])
}

/// Evaluates `sum_k coeffs[k] · (G − I)^k` by Horner's scheme in `(G − I)`,
/// using exactly `coeffs.len() − 1` matrix multiplications.
pub fn matrix_polynomial_horner<R: Scalar>(coeffs: &[R], g: &Matrix<R>) -> Result<Matrix<R>> {
    if g.rows() != g.cols() {
        return Err(AonError::ShapeMismatch {
            op: "matrix_polynomial_horner",
            expected: "square matrix".into(),
            got: format!("{}x{}", g.rows(), g.cols()),
        });
    }
    let n = g.rows();
    assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
    let shifted = g.sub(&Matrix::identity(n))?;
    let mut p = Matrix::identity(n).scale(coeffs[coeffs.len() - 1]);
    for k in (0..coeffs.len() - 1).rev() {
        p = p.matmul(&shifted)?;
        for i in 0..n {
            let d = p.get(i, i) + coeffs[k];
            p.set(i, i, d);
        }
    }
    Ok(p)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors
/// as columns. Sweeps run until the off-diagonal Frobenius norm drops
/// below `1e-12 · max(1, ‖A‖_F)`, capped at 100 sweeps.
pub fn jacobi_eigen<R: Scalar>(m: &Matrix<R>) -> Result<(Vec<R>, Matrix<R>)> {
    if m.rows() != m.cols() {
        return Err(AonError::ShapeMismatch {
            op: "jacobi_eigen",
            expected: "square matrix".into(),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut vecs = Matrix::identity(n);
    let tol = R::of(1e-12) * R::one().max(m.frobenius_norm());

    for _sweep in 0..100 {
        let mut off = R::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let x = a.get(i, j);
                off = off + R::of(2.0) * x * x;
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < tol * R::of(1e-3) {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (R::of(2.0) * apq);
                let t = if theta >= R::zero() {
                    R::one() / (theta + (R::one() + theta * theta).sqrt())
                } else {
                    -R::one() / (-theta + (R::one() + theta * theta).sqrt())
                };
                let c = R::one() / (R::one() + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                    a.set(p, k, a.get(k, p));
                    a.set(q, k, a.get(k, q));
                }
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, R::zero());
                a.set(q, p, R::zero());

                for k in 0..n {
                    let vkp = vecs.get(k, p);
                    let vkq = vecs.get(k, q);
                    vecs.set(k, p, c * vkp - s * vkq);
                    vecs.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<R> = order.iter().map(|&i| a.get(i, i)).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| vecs.get(r, order[c]));
    Ok((eigenvalues, eigenvectors))
}

/// Largest singular value via Jacobi eigen-decomposition of `aᵀa`.
///
/// Deterministic test oracle, independent of the power-iteration path.
pub fn spectral_norm_oracle<R: Scalar>(a: &Matrix<R>) -> R {
    let ata = a.transpose().gram();
    let (eigenvalues, _) = jacobi_eigen(&ata).expect("gram matrix is square");
    let top = eigenvalues
        .first()
        .copied()
        .unwrap_or(R::zero())
        .max(R::zero());
    top.sqrt()
}
