//! Desk-scale datasets: seeded synthetic generators, the big-endian IDX
//! image/label container, and per-feature standardization.
//!
//! Datasets are immutable after construction and freely shareable.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AonError, Result};
use crate::linalg::{Matrix, Vector};
use crate::nn::Value;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// Inputs paired with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<R: Scalar = f64> {
    pub inputs: DatasetInputs<R>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetInputs<R: Scalar = f64> {
    /// `samples x features`.
    Flat(Matrix<R>),
    /// `samples x channels x height x width`.
    Images(Tensor4<R>),
}

impl<R: Scalar> Dataset<R> {
    pub fn flat(inputs: Matrix<R>, labels: Vec<usize>, class_count: usize, split: Split) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(AonError::ShapeMismatch {
                op: "Dataset::flat",
                expected: format!("{} labels", inputs.rows()),
                got: format!("{}", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(AonError::InvalidLabel {
                label: bad,
                classes: class_count,
            });
        }
        Ok(Self {
            inputs: DatasetInputs::Flat(inputs),
            labels,
            class_count,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        match &self.inputs {
            DatasetInputs::Flat(m) => m.cols(),
            DatasetInputs::Images(t) => {
                let [_, c, h, w] = t.dims();
                c * h * w
            }
        }
    }

    /// Gathers the indexed samples into a batch value plus labels.
    pub fn gather(&self, indices: &[usize]) -> (Value<R>, Vec<usize>) {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let value = match &self.inputs {
            DatasetInputs::Flat(m) => {
                let batch = Matrix::from_fn(indices.len(), m.cols(), |r, c| m.get(indices[r], c));
                Value::Flat(batch)
            }
            DatasetInputs::Images(t) => {
                let [_, c, h, w] = t.dims();
                let mut out = Tensor4::zeros([indices.len(), c, h, w]);
                for (r, &i) in indices.iter().enumerate() {
                    for ci in 0..c {
                        for hi in 0..h {
                            for wi in 0..w {
                                out.set(r, ci, hi, wi, t.get(i, ci, hi, wi));
                            }
                        }
                    }
                }
                Value::Image(out)
            }
        };
        (value, labels)
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> (Value<R>, Vec<usize>) {
        let indices: Vec<usize> = (0..self.len()).collect();
        self.gather(&indices)
    }

    /// Flattens image inputs into a `samples x features` matrix (no-op
    /// for flat datasets).
    pub fn flattened(&self) -> Self {
        match &self.inputs {
            DatasetInputs::Flat(_) => self.clone(),
            DatasetInputs::Images(t) => {
                let [n, c, h, w] = t.dims();
                let m = Matrix::new(n, c * h * w, t.data().to_vec())
                    .expect("tensor data is finite");
                Self {
                    inputs: DatasetInputs::Flat(m),
                    labels: self.labels.clone(),
                    class_count: self.class_count,
                    split: self.split,
                }
            }
        }
    }
}

/// Gaussian blobs with class means spaced on the unit circle.
pub fn gen_blobs<R: Scalar>(
    classes: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Dataset<R> {
    assert!(classes >= 1 && per_class >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let angle = std::f64::consts::TAU * c as f64 / classes as f64;
        let (my, mx) = angle.sin_cos();
        for _ in 0..per_class {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            data.push(R::of(mx + spread * dx));
            data.push(R::of(my + spread * dy));
            labels.push(c);
        }
    }
    let inputs = Matrix::new(n, 2, data).expect("finite samples");
    Dataset::flat(inputs, labels, classes, Split::Train).expect("labels in range")
}

/// Interleaved Archimedean spiral arms with angular noise.
pub fn gen_spirals<R: Scalar>(
    classes: usize,
    per_class: usize,
    noise: f64,
    seed: u64,
) -> Dataset<R> {
    assert!(classes >= 1 && per_class >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let turns = 1.75;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let phase = std::f64::consts::TAU * c as f64 / classes as f64;
        for i in 0..per_class {
            let t = if per_class > 1 {
                i as f64 / (per_class - 1) as f64
            } else {
                0.5
            };
            let radius = 0.1 + 0.9 * t;
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let theta = turns * std::f64::consts::TAU * t + phase + noise * jitter;
            data.push(R::of(radius * theta.cos()));
            data.push(R::of(radius * theta.sin()));
            labels.push(c);
        }
    }
    let inputs = Matrix::new(n, 2, data).expect("finite samples");
    Dataset::flat(inputs, labels, classes, Split::Train).expect("labels in range")
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(AonError::Truncated {
            path: path.into(),
            expected: end,
            got: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Reads an IDX image file (magic `0x00000803`, big-endian counts, then
/// unsigned bytes) into an `N x 1 x rows x cols` tensor scaled to `[0, 1]`.
pub fn load_idx_images<R: Scalar>(path: impl AsRef<Path>) -> Result<Tensor4<R>> {
    let path_str = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref())?;
    let magic = read_be_u32(&bytes, 0, &path_str)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(AonError::IdxMagic {
            path: path_str,
            got: magic,
            expected: IDX_IMAGE_MAGIC,
        });
    }
    let n = read_be_u32(&bytes, 4, &path_str)? as usize;
    let rows = read_be_u32(&bytes, 8, &path_str)? as usize;
    let cols = read_be_u32(&bytes, 12, &path_str)? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(AonError::Truncated {
            path: path_str,
            expected,
            got: bytes.len(),
        });
    }
    let data: Vec<R> = bytes[16..expected]
        .iter()
        .map(|&b| R::of(b as f64 / 255.0))
        .collect();
    Tensor4::new([n, 1, rows, cols], data)
}

/// Reads an IDX label file (magic `0x00000801`).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path_str = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref())?;
    let magic = read_be_u32(&bytes, 0, &path_str)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(AonError::IdxMagic {
            path: path_str,
            got: magic,
            expected: IDX_LABEL_MAGIC,
        });
    }
    let n = read_be_u32(&bytes, 4, &path_str)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(AonError::Truncated {
            path: path_str,
            expected,
            got: bytes.len(),
        });
    }
    Ok(bytes[8..expected].iter().map(|&b| b as usize).collect())
}

/// Writes an `N x 1 x rows x cols` tensor with values in `[0, 1]` as an
/// IDX image file, quantising to bytes. Byte-valued data (multiples of
/// `1/255`) round-trips exactly.
pub fn write_idx_images<R: Scalar>(tensor: &Tensor4<R>, path: impl AsRef<Path>) -> Result<()> {
    let [n, c, rows, cols] = tensor.dims();
    if c != 1 {
        return Err(AonError::ShapeMismatch {
            op: "write_idx_images",
            expected: "single-channel tensor".into(),
            got: format!("{c} channels"),
        });
    }
    let mut bytes = Vec::with_capacity(16 + n * rows * cols);
    bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(n as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in tensor.data() {
        let q = (v.as_f64() * 255.0).round().clamp(0.0, 255.0);
        bytes.push(q as u8);
    }
    std::fs::write(path.as_ref(), bytes)?;
    Ok(())
}

/// Writes labels as an IDX label file.
pub fn write_idx_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        bytes.push(l as u8);
    }
    std::fs::write(path.as_ref(), bytes)?;
    Ok(())
}

/// Per-feature affine transform fitted on a training split (population
/// variance). Zero-variance features are centered but not scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<R: Scalar = f64> {
    pub mean: Vector<R>,
    pub scale: Vector<R>,
}

impl<R: Scalar> Standardizer<R> {
    pub fn fit(ds: &Dataset<R>) -> Self {
        let flat = ds.flattened();
        let m = match &flat.inputs {
            DatasetInputs::Flat(m) => m.clone(),
            DatasetInputs::Images(_) => unreachable!("flattened"),
        };
        let n = R::of(m.rows() as f64);
        let f = m.cols();
        let mut mean = vec![R::zero(); f];
        for r in 0..m.rows() {
            for (j, acc) in mean.iter_mut().enumerate() {
                *acc = *acc + m.get(r, j);
            }
        }
        for acc in mean.iter_mut() {
            *acc = *acc / n;
        }
        let mut var = vec![R::zero(); f];
        for r in 0..m.rows() {
            for (j, acc) in var.iter_mut().enumerate() {
                let d = m.get(r, j) - mean[j];
                *acc = *acc + d * d;
            }
        }
        let scale: Vec<R> = var
            .iter()
            .map(|&v| {
                let pop = v / n;
                if pop > R::zero() {
                    R::one() / pop.sqrt()
                } else {
                    R::one()
                }
            })
            .collect();
        Self {
            mean: Vector::from_vec(mean),
            scale: Vector::from_vec(scale),
        }
    }

    pub fn apply(&self, ds: &Dataset<R>) -> Dataset<R> {
        let flat = ds.flattened();
        let m = match &flat.inputs {
            DatasetInputs::Flat(m) => m,
            DatasetInputs::Images(_) => unreachable!("flattened"),
        };
        let out = Matrix::from_fn(m.rows(), m.cols(), |r, j| {
            (m.get(r, j) - self.mean.as_slice()[j]) * self.scale.as_slice()[j]
        });
        Dataset {
            inputs: DatasetInputs::Flat(out),
            labels: flat.labels,
            class_count: flat.class_count,
            split: flat.split,
        }
    }
}

/// Fits on `ds` and transforms it (single-split convenience; use
/// [`Standardizer`] to carry training statistics onto a validation split).
pub fn standardize<R: Scalar>(ds: &Dataset<R>) -> Dataset<R> {
    Standardizer::fit(ds).apply(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = gen_blobs::<f64>(3, 10, 0.2, 5);
        let b = gen_blobs::<f64>(3, 10, 0.2, 5);
        assert_eq!(a, b);
        let c = gen_spirals::<f64>(2, 25, 0.1, 9);
        let d = gen_spirals::<f64>(2, 25, 0.1, 9);
        assert_eq!(c, d);
        assert_ne!(gen_spirals::<f64>(2, 25, 0.1, 10), c);
    }

    #[test]
    fn generators_balance_classes() {
        let ds = gen_spirals::<f64>(3, 17, 0.2, 1);
        for c in 0..3 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == c).count(), 17);
        }
        assert_eq!(ds.len(), 51);
        assert_eq!(ds.feature_count(), 2);
    }

    #[test]
    fn zero_spread_blobs_collapse_to_means() {
        let ds = gen_blobs::<f64>(2, 5, 0.0, 3);
        let m = match &ds.inputs {
            DatasetInputs::Flat(m) => m,
            _ => unreachable!(),
        };
        for r in 1..5 {
            assert_eq!(m.row(r), m.row(0), "class-0 points identical");
        }
        assert!((m.get(0, 0) - 1.0).abs() < 1e-12, "class 0 mean at (1, 0)");
    }

    #[test]
    fn idx_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs.idx");
        let lbl_path = dir.path().join("lbls.idx");
        // byte-valued pixels round-trip exactly
        let data: Vec<f64> = (0..12).map(|i| (i * 20 % 256) as f64 / 255.0).collect();
        let t = Tensor4::new([3, 1, 2, 2], data).unwrap();
        write_idx_images(&t, &img_path).unwrap();
        let back = load_idx_images::<f64>(&img_path).unwrap();
        assert_eq!(back, t);

        write_idx_labels(&[0, 1, 2], &lbl_path).unwrap();
        assert_eq!(load_idx_labels(&lbl_path).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn idx_hand_built_pixels_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.idx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        std::fs::write(&path, bytes).unwrap();
        let t = load_idx_images::<f64>(&path).unwrap();
        assert_eq!(t.dims(), [1, 1, 2, 2]);
        assert_eq!(t.get(0, 0, 0, 0), 0.0);
        assert_eq!(t.get(0, 0, 0, 1), 1.0);
        assert!((t.get(0, 0, 1, 0) - 0.50196).abs() < 1e-5);
        assert!((t.get(0, 0, 1, 1) - 0.25098).abs() < 1e-5);
    }

    #[test]
    fn idx_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0802u32.to_be_bytes());
        bytes.extend_from_slice(&[0; 12]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_idx_images::<f64>(&path),
            Err(AonError::IdxMagic { .. })
        ));

        let mut ok = Vec::new();
        ok.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        ok.extend_from_slice(&2u32.to_be_bytes());
        ok.extend_from_slice(&2u32.to_be_bytes());
        ok.extend_from_slice(&2u32.to_be_bytes());
        ok.extend_from_slice(&[1, 2, 3]); // needs 8
        std::fs::write(&path, &ok).unwrap();
        assert!(matches!(
            load_idx_images::<f64>(&path),
            Err(AonError::Truncated { .. })
        ));
    }

    #[test]
    fn standardize_two_point_feature() {
        let inputs: Matrix = Matrix::from_rows(&[&[1.0], &[3.0]]);
        let ds = Dataset::flat(inputs, vec![0, 1], 2, Split::Train).unwrap();
        let out = standardize(&ds);
        let m = match &out.inputs {
            DatasetInputs::Flat(m) => m,
            _ => unreachable!(),
        };
        assert!((m.get(0, 0) + 1.0).abs() < 1e-12);
        assert!((m.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_is_idempotent_and_guards_constants() {
        let inputs = Matrix::from_rows(&[&[1.0, 7.0], &[-1.0, 7.0], &[1.0, 7.0], &[-1.0, 7.0]]);
        let ds = Dataset::flat(inputs, vec![0, 1, 0, 1], 2, Split::Train).unwrap();
        let once = standardize(&ds);
        let twice = standardize(&once);
        let (a, b) = match (&once.inputs, &twice.inputs) {
            (DatasetInputs::Flat(a), DatasetInputs::Flat(b)) => (a, b),
            _ => unreachable!(),
        };
        assert!(a.sub(b).unwrap().frobenius_norm() < 1e-12);
        // constant feature centered, not scaled
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn validation_uses_training_statistics() {
        let train_inputs: Matrix = Matrix::from_rows(&[&[0.0], &[2.0]]);
        let train = Dataset::flat(train_inputs, vec![0, 1], 2, Split::Train).unwrap();
        let val_inputs = Matrix::from_rows(&[&[4.0]]);
        let val = Dataset::flat(val_inputs, vec![0], 2, Split::Validation).unwrap();
        let standardizer = Standardizer::fit(&train);
        let out = standardizer.apply(&val);
        let m = match &out.inputs {
            DatasetInputs::Flat(m) => m,
            _ => unreachable!(),
        };
        // train mean 1, std 1: 4 → 3
        assert!((m.get(0, 0) - 3.0).abs() < 1e-12);
        assert_eq!(out.split, Split::Validation);
    }

    #[test]
    fn gather_picks_rows() {
        let ds = gen_blobs::<f64>(2, 3, 0.1, 1);
        let (batch, labels) = ds.gather(&[4, 0]);
        let m = batch.as_flat().unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(labels, vec![ds.labels[4], ds.labels[0]]);
    }
}
