//! Versioned binary model container.
//!
//! Layout: the magic string `AONKIT01`, one flag byte (bit 0 set for
//! frozen models), a manifest describing every layer (type tags, shapes,
//! mode flags, little-endian integers), then the tensor payloads as raw
//! little-endian `f64` in manifest order. Frozen checkpoints store the
//! cached transform and drop the power-iteration vectors; trainable ones
//! store the vectors so reloaded models resume bit-identically.

use std::path::Path;

use crate::aon::{AonMode, AonParam};
use crate::error::{AonError, Result};
use crate::linalg::{Matrix, Vector};
use crate::nn::{BatchNormLayer, ConvLayer, DenseKind, DenseLayer, Layer, Sequential};
use crate::scalar::Scalar;
use crate::specnorm::PowerIterState;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AONKIT01";

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_BATCHNORM: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_MAXPOOL2: u8 = 4;
const TAG_FLATTEN: u8 = 5;

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { bytes: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.bytes.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn slice<R: Scalar>(&mut self, data: &[R]) {
        for v in data {
            self.f64(v.as_f64());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AonError::Checkpoint(format!(
                "truncated at offset {} (need {} more bytes)",
                self.pos, n
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn vec<R: Scalar>(&mut self, n: usize) -> Result<Vec<R>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(R::of(self.f64()?));
        }
        Ok(out)
    }
}

struct WeightManifest {
    normalized: bool,
    pre_sn: bool,
    q: u32,
    rows: u32,
    cols: u32,
    has_bias: bool,
    use_gamma: bool,
    has_frozen: bool,
    has_state: bool,
    iterations: u32,
}

fn weight_manifest<R: Scalar>(
    kind: &DenseKind<R>,
    bias: &Option<Vector<R>>,
    use_gamma: bool,
    frozen_file: bool,
) -> WeightManifest {
    let w = kind.weight();
    match kind {
        DenseKind::Plain { .. } => WeightManifest {
            normalized: false,
            pre_sn: false,
            q: 0,
            rows: w.rows() as u32,
            cols: w.cols() as u32,
            has_bias: bias.is_some(),
            use_gamma,
            has_frozen: false,
            has_state: false,
            iterations: 0,
        },
        DenseKind::Normalized(p) => WeightManifest {
            normalized: true,
            pre_sn: p.mode == AonMode::PreSn,
            q: p.q as u32,
            rows: w.rows() as u32,
            cols: w.cols() as u32,
            has_bias: bias.is_some(),
            use_gamma,
            has_frozen: p.frozen_h.is_some(),
            // frozen files drop the eigenvector estimates to save space
            has_state: !frozen_file,
            iterations: p.state.iterations_per_step as u32,
        },
    }
}

fn write_weight_manifest(w: &mut Writer, m: &WeightManifest) {
    w.u8(m.normalized as u8);
    if m.normalized {
        w.u8(m.pre_sn as u8);
        w.u32(m.q);
    }
    w.u32(m.rows);
    w.u32(m.cols);
    w.u8(m.has_bias as u8);
    w.u8(m.use_gamma as u8);
    w.u8(m.has_frozen as u8);
    w.u8(m.has_state as u8);
    if m.has_state {
        w.u32(m.iterations);
    }
}

fn write_weight_payload<R: Scalar>(
    w: &mut Writer,
    kind: &DenseKind<R>,
    bias: &Option<Vector<R>>,
    manifest: &WeightManifest,
) {
    w.slice(kind.weight().data());
    w.slice(kind.gamma().as_slice());
    if let Some(b) = bias {
        w.slice(b.as_slice());
    }
    if let DenseKind::Normalized(p) = kind {
        if manifest.has_frozen {
            w.slice(p.frozen_h.as_ref().expect("manifest says frozen").data());
        }
        if manifest.has_state {
            w.slice(p.state.u.as_slice());
            w.slice(p.state.v.as_slice());
        }
    }
}

fn read_weight_manifest(r: &mut Reader) -> Result<WeightManifest> {
    let normalized = r.u8()? != 0;
    let (pre_sn, q) = if normalized {
        (r.u8()? != 0, r.u32()?)
    } else {
        (false, 0)
    };
    let rows = r.u32()?;
    let cols = r.u32()?;
    let has_bias = r.u8()? != 0;
    let use_gamma = r.u8()? != 0;
    let has_frozen = r.u8()? != 0;
    let has_state = r.u8()? != 0;
    let iterations = if has_state { r.u32()? } else { 0 };
    Ok(WeightManifest {
        normalized,
        pre_sn,
        q,
        rows,
        cols,
        has_bias,
        use_gamma,
        has_frozen,
        has_state,
        iterations,
    })
}

fn read_weight_payload<R: Scalar>(
    r: &mut Reader,
    m: &WeightManifest,
) -> Result<(DenseKind<R>, Option<Vector<R>>)> {
    let rows = m.rows as usize;
    let cols = m.cols as usize;
    let weight = Matrix::new(rows, cols, r.vec(rows * cols)?)
        .map_err(|e| AonError::Checkpoint(e.to_string()))?;
    let gamma = Vector::from_vec(r.vec(rows)?);
    let bias = if m.has_bias {
        Some(Vector::from_vec(r.vec(rows)?))
    } else {
        None
    };
    let kind = if m.normalized {
        let frozen_h = if m.has_frozen {
            Some(
                Matrix::new(rows, cols, r.vec(rows * cols)?)
                    .map_err(|e| AonError::Checkpoint(e.to_string()))?,
            )
        } else {
            None
        };
        let state = if m.has_state {
            PowerIterState {
                u: Vector::from_vec(r.vec(rows)?),
                v: Vector::from_vec(r.vec(cols)?),
                iterations_per_step: m.iterations as usize,
            }
        } else {
            // frozen file: the state was dropped; any placeholder works
            // because frozen parameters never read it
            crate::specnorm::init_state(rows, cols, 0)
        };
        DenseKind::Normalized(AonParam {
            w: weight,
            q: m.q as usize,
            state,
            gamma,
            frozen_h,
            mode: if m.pre_sn {
                AonMode::PreSn
            } else {
                AonMode::Standard
            },
        })
    } else {
        DenseKind::Plain { weight, gamma }
    };
    Ok((kind, bias))
}

/// Serialises the model. The frozen flag byte mirrors
/// [`Sequential::is_frozen`].
pub fn save_checkpoint<R: Scalar>(model: &Sequential<R>, path: impl AsRef<Path>) -> Result<()> {
    let frozen = model.is_frozen();
    let mut w = Writer::new();
    w.bytes.extend_from_slice(CHECKPOINT_MAGIC);
    w.u8(frozen as u8);
    w.u32(model.layers.len() as u32);

    // manifest section
    let mut manifests = Vec::new();
    for layer in &model.layers {
        match layer {
            Layer::Dense(d) => {
                w.u8(TAG_DENSE);
                let m = weight_manifest(&d.kind, &d.bias, d.use_gamma, frozen);
                write_weight_manifest(&mut w, &m);
                manifests.push(Some(m));
            }
            Layer::Conv(c) => {
                w.u8(TAG_CONV);
                let m = weight_manifest(&c.kind, &c.bias, c.use_gamma, frozen);
                write_weight_manifest(&mut w, &m);
                w.u32(c.in_channels as u32);
                w.u32(c.kernel_h as u32);
                w.u32(c.kernel_w as u32);
                w.u32(c.stride as u32);
                w.u32(c.padding as u32);
                manifests.push(Some(m));
            }
            Layer::BatchNorm(b) => {
                w.u8(TAG_BATCHNORM);
                w.u32(b.features() as u32);
                w.f64(b.eps.as_f64());
                w.f64(b.momentum.as_f64());
                w.u8(b.training as u8);
                manifests.push(None);
            }
            Layer::Relu => {
                w.u8(TAG_RELU);
                manifests.push(None);
            }
            Layer::MaxPool2 => {
                w.u8(TAG_MAXPOOL2);
                manifests.push(None);
            }
            Layer::Flatten => {
                w.u8(TAG_FLATTEN);
                manifests.push(None);
            }
        }
    }

    // payload section
    for (layer, manifest) in model.layers.iter().zip(&manifests) {
        match layer {
            Layer::Dense(d) => {
                write_weight_payload(&mut w, &d.kind, &d.bias, manifest.as_ref().unwrap())
            }
            Layer::Conv(c) => {
                write_weight_payload(&mut w, &c.kind, &c.bias, manifest.as_ref().unwrap())
            }
            Layer::BatchNorm(b) => {
                w.slice(b.gamma.as_slice());
                w.slice(b.beta.as_slice());
                w.slice(b.running_mean.as_slice());
                w.slice(b.running_var.as_slice());
            }
            _ => {}
        }
    }

    std::fs::write(path.as_ref(), &w.bytes)?;
    Ok(())
}

enum LayerManifest {
    Dense(WeightManifest),
    Conv {
        weights: WeightManifest,
        in_channels: u32,
        kernel_h: u32,
        kernel_w: u32,
        stride: u32,
        padding: u32,
    },
    BatchNorm {
        features: u32,
        eps: f64,
        momentum: f64,
        training: bool,
    },
    Relu,
    MaxPool2,
    Flatten,
}

/// Loads a model saved by [`save_checkpoint`].
pub fn load_checkpoint<R: Scalar>(path: impl AsRef<Path>) -> Result<Sequential<R>> {
    let bytes = std::fs::read(path.as_ref())?;
    let mut r = Reader::new(&bytes);
    let magic = r.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(AonError::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            &magic,
            &CHECKPOINT_MAGIC
        )));
    }
    let _frozen = r.u8()? != 0;
    let count = r.u32()? as usize;

    let mut manifests = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = r.u8()?;
        let m = match tag {
            TAG_DENSE => LayerManifest::Dense(read_weight_manifest(&mut r)?),
            TAG_CONV => {
                let weights = read_weight_manifest(&mut r)?;
                LayerManifest::Conv {
                    weights,
                    in_channels: r.u32()?,
                    kernel_h: r.u32()?,
                    kernel_w: r.u32()?,
                    stride: r.u32()?,
                    padding: r.u32()?,
                }
            }
            TAG_BATCHNORM => LayerManifest::BatchNorm {
                features: r.u32()?,
                eps: r.f64()?,
                momentum: r.f64()?,
                training: r.u8()? != 0,
            },
            TAG_RELU => LayerManifest::Relu,
            TAG_MAXPOOL2 => LayerManifest::MaxPool2,
            TAG_FLATTEN => LayerManifest::Flatten,
            other => {
                return Err(AonError::Checkpoint(format!("unknown layer tag {other}")));
            }
        };
        manifests.push(m);
    }

    let mut layers = Vec::with_capacity(count);
    for manifest in &manifests {
        let layer = match manifest {
            LayerManifest::Dense(m) => {
                let (kind, bias) = read_weight_payload::<R>(&mut r, m)?;
                Layer::Dense(DenseLayer {
                    kind,
                    bias,
                    use_gamma: m.use_gamma,
                })
            }
            LayerManifest::Conv {
                weights,
                in_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                let (kind, bias) = read_weight_payload::<R>(&mut r, weights)?;
                Layer::Conv(ConvLayer {
                    kind,
                    bias,
                    use_gamma: weights.use_gamma,
                    in_channels: *in_channels as usize,
                    kernel_h: *kernel_h as usize,
                    kernel_w: *kernel_w as usize,
                    stride: *stride as usize,
                    padding: *padding as usize,
                })
            }
            LayerManifest::BatchNorm {
                features,
                eps,
                momentum,
                training,
            } => {
                let f = *features as usize;
                let mut bn = BatchNormLayer::<R>::new(f);
                bn.eps = R::of(*eps);
                bn.momentum = R::of(*momentum);
                bn.training = *training;
                bn.gamma = Vector::from_vec(r.vec(f)?);
                bn.beta = Vector::from_vec(r.vec(f)?);
                bn.running_mean = Vector::from_vec(r.vec(f)?);
                bn.running_var = Vector::from_vec(r.vec(f)?);
                Layer::BatchNorm(bn)
            }
            LayerManifest::Relu => Layer::Relu,
            LayerManifest::MaxPool2 => Layer::MaxPool2,
            LayerManifest::Flatten => Layer::Flatten,
        };
        layers.push(layer);
    }

    if r.pos != bytes.len() {
        return Err(AonError::Checkpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    Ok(Sequential::new(layers))
}
