//! Sequential network container.
//!
//! A [`Sequential`] owns an ordered list of layers and threads a
//! [`Value`] (flat batch matrix or image tensor) through them, collecting
//! per-layer caches on the way forward and per-layer parameter gradients
//! on the way back. Parameter tensors are enumerated in a canonical
//! order (per layer: weight, `γ`, bias / batch-norm scale, shift) that
//! gradients and optimizer state mirror exactly.

use crate::error::{AonError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

use super::activation::{maxpool2_backward, maxpool2_forward, relu_backward, relu_forward};
use super::batchnorm::{BatchNormCache, BatchNormLayer};
use super::conv::{ConvCache, ConvLayer};
use super::dense::{DenseCache, DenseKind, DenseLayer};
use super::ForwardMode;

/// Activations flowing between layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Value<R: Scalar = f64> {
    /// `batch x features`.
    Flat(Matrix<R>),
    /// `batch x channels x height x width`.
    Image(Tensor4<R>),
}

impl<R: Scalar> Value<R> {
    pub fn batch_len(&self) -> usize {
        match self {
            Value::Flat(m) => m.rows(),
            Value::Image(t) => t.dims()[0],
        }
    }

    pub fn as_flat(&self) -> Result<&Matrix<R>> {
        match self {
            Value::Flat(m) => Ok(m),
            Value::Image(t) => Err(AonError::ShapeMismatch {
                op: "expect_flat",
                expected: "flat batch".into(),
                got: format!("image batch {:?}", t.dims()),
            }),
        }
    }

    pub fn as_image(&self) -> Result<&Tensor4<R>> {
        match self {
            Value::Image(t) => Ok(t),
            Value::Flat(m) => Err(AonError::ShapeMismatch {
                op: "expect_image",
                expected: "image batch".into(),
                got: format!("flat batch {}x{}", m.rows(), m.cols()),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<R: Scalar = f64> {
    Dense(DenseLayer<R>),
    Conv(ConvLayer<R>),
    BatchNorm(BatchNormLayer<R>),
    Relu,
    MaxPool2,
    Flatten,
}

#[derive(Debug, Clone)]
pub enum LayerCache<R: Scalar = f64> {
    Dense(DenseCache<R>),
    Conv(ConvCache<R>),
    BatchNorm(BatchNormCache<R>),
    Relu(Vec<bool>),
    MaxPool2 { argmax: Vec<usize>, in_dims: [usize; 4] },
    Flatten([usize; 4]),
}

/// Parameter gradients, `layers[i][slot]` aligned with
/// [`Sequential::param_slices`].
#[derive(Debug, Clone)]
pub struct Grads<R: Scalar = f64> {
    pub layers: Vec<Vec<Vec<R>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<R: Scalar = f64> {
    pub layers: Vec<Layer<R>>,
}

impl<R: Scalar> Sequential<R> {
    pub fn new(layers: Vec<Layer<R>>) -> Self {
        Self { layers }
    }

    pub fn forward(
        &mut self,
        input: &Value<R>,
        mode: ForwardMode,
    ) -> Result<(Value<R>, Vec<LayerCache<R>>)> {
        let mut value = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (next, cache) = match layer {
                Layer::Dense(l) => {
                    let (out, c) = l.forward(value.as_flat()?, mode)?;
                    (Value::Flat(out), LayerCache::Dense(c))
                }
                Layer::Conv(l) => {
                    let (out, c) = l.forward(value.as_image()?, mode)?;
                    (Value::Image(out), LayerCache::Conv(c))
                }
                Layer::BatchNorm(l) => {
                    let (out, c) = l.forward(value.as_flat()?, mode)?;
                    (Value::Flat(out), LayerCache::BatchNorm(c))
                }
                Layer::Relu => match &value {
                    Value::Flat(m) => {
                        let (data, mask) = relu_forward(m.data());
                        let out = Matrix::new(m.rows(), m.cols(), data)?;
                        (Value::Flat(out), LayerCache::Relu(mask))
                    }
                    Value::Image(t) => {
                        let (data, mask) = relu_forward(t.data());
                        let out = Tensor4::new(t.dims(), data)?;
                        (Value::Image(out), LayerCache::Relu(mask))
                    }
                },
                Layer::MaxPool2 => {
                    let t = value.as_image()?;
                    let in_dims = t.dims();
                    let (out, argmax) = maxpool2_forward(t)?;
                    (
                        Value::Image(out),
                        LayerCache::MaxPool2 { argmax, in_dims },
                    )
                }
                Layer::Flatten => {
                    let t = value.as_image()?;
                    let [b, c, h, w] = t.dims();
                    let out = Matrix::new(b, c * h * w, t.data().to_vec())?;
                    (Value::Flat(out), LayerCache::Flatten([b, c, h, w]))
                }
            };
            value = next;
            caches.push(cache);
        }
        Ok((value, caches))
    }

    /// Back-propagates `grad` (w.r.t. the forward output), returning
    /// parameter gradients aligned with [`Self::param_slices`].
    pub fn backward(&self, grad: Value<R>, caches: &[LayerCache<R>]) -> Result<Grads<R>> {
        if caches.len() != self.layers.len() {
            return Err(AonError::ShapeMismatch {
                op: "sequential_backward",
                expected: format!("{} caches", self.layers.len()),
                got: format!("{}", caches.len()),
            });
        }
        let mut grads: Vec<Vec<Vec<R>>> = vec![Vec::new(); self.layers.len()];
        let mut current = grad;
        for (idx, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let (next, layer_grads) = match (layer, cache) {
                (Layer::Dense(l), LayerCache::Dense(c)) => {
                    let (gx, g) = l.backward(current.as_flat()?, c)?;
                    (Value::Flat(gx), g)
                }
                (Layer::Conv(l), LayerCache::Conv(c)) => {
                    let (gx, g) = l.backward(current.as_image()?, c)?;
                    (Value::Image(gx), g)
                }
                (Layer::BatchNorm(l), LayerCache::BatchNorm(c)) => {
                    let (gx, g) = l.backward(current.as_flat()?, c)?;
                    (Value::Flat(gx), g)
                }
                (Layer::Relu, LayerCache::Relu(mask)) => {
                    let next = match &current {
                        Value::Flat(m) => Value::Flat(Matrix::new(
                            m.rows(),
                            m.cols(),
                            relu_backward(m.data(), mask),
                        )?),
                        Value::Image(t) => Value::Image(Tensor4::new(
                            t.dims(),
                            relu_backward(t.data(), mask),
                        )?),
                    };
                    (next, Vec::new())
                }
                (Layer::MaxPool2, LayerCache::MaxPool2 { argmax, in_dims }) => {
                    let g = maxpool2_backward(current.as_image()?, argmax, *in_dims);
                    (Value::Image(g), Vec::new())
                }
                (Layer::Flatten, LayerCache::Flatten(dims)) => {
                    let m = current.as_flat()?;
                    let g = Tensor4::new(*dims, m.data().to_vec())?;
                    (Value::Image(g), Vec::new())
                }
                _ => {
                    return Err(AonError::ShapeMismatch {
                        op: "sequential_backward",
                        expected: "cache kind matching layer".into(),
                        got: "mismatched cache".into(),
                    })
                }
            };
            grads[idx] = layer_grads;
            current = next;
        }
        Ok(Grads { layers: grads })
    }

    /// Canonical parameter enumeration, one `Vec` of slices per layer.
    pub fn param_slices(&self) -> Vec<Vec<&[R]>> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.param_slices(),
                Layer::Conv(c) => c.param_slices(),
                Layer::BatchNorm(b) => b.param_slices(),
                _ => Vec::new(),
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<Vec<&mut [R]>> {
        self.layers
            .iter_mut()
            .map(|l| match l {
                Layer::Dense(d) => d.param_slices_mut(),
                Layer::Conv(c) => c.param_slices_mut(),
                Layer::BatchNorm(b) => b.param_slices_mut(),
                _ => Vec::new(),
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_slices()
            .iter()
            .flat_map(|l| l.iter())
            .map(|s| s.len())
            .sum()
    }

    /// Raw weight matrices of dense/conv layers (penalty targets), with
    /// their layer indices.
    pub fn weight_matrices(&self) -> Vec<(usize, &Matrix<R>)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Dense(d) => Some((i, d.kind.weight())),
                Layer::Conv(c) => Some((i, c.kind.weight())),
                _ => None,
            })
            .collect()
    }

    /// Normalised parameters (for per-layer diagnostics).
    pub fn normalized_params(&self) -> Vec<&crate::aon::AonParam<R>> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => match &d.kind {
                    DenseKind::Normalized(p) => Some(p),
                    DenseKind::Plain { .. } => None,
                },
                Layer::Conv(c) => match &c.kind {
                    DenseKind::Normalized(p) => Some(p),
                    DenseKind::Plain { .. } => None,
                },
                _ => None,
            })
            .collect()
    }

    /// Freezes every normalised parameter and pins batch-norm layers to
    /// their running statistics; outputs become pure functions of the
    /// input. Idempotent.
    pub fn freeze(&mut self) -> Result<()> {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => d.freeze()?,
                Layer::Conv(c) => c.freeze()?,
                Layer::BatchNorm(b) => b.training = false,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn is_frozen(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::Dense(d) => match &d.kind {
                DenseKind::Normalized(p) => p.is_frozen(),
                DenseKind::Plain { .. } => true,
            },
            Layer::Conv(c) => match &c.kind {
                DenseKind::Normalized(p) => p.is_frozen(),
                DenseKind::Plain { .. } => true,
            },
            Layer::BatchNorm(b) => !b.training,
            _ => true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aon::AonMode;
    use crate::nn::{softmax_cross_entropy_batch, ForwardMode};
    use crate::testsupport::{random_matrix, test_rng};
    use rand_distr::{Distribution, StandardNormal};

    fn random_tensor(rng: &mut rand_chacha::ChaCha12Rng, dims: [usize; 4]) -> Tensor4<f64> {
        let data = (0..dims.iter().product())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Tensor4::new(dims, data).unwrap()
    }

    fn two_layer_net(rng: &mut rand_chacha::ChaCha12Rng) -> Sequential<f64> {
        let w1 = random_matrix(rng, 5, 3).scale(0.7);
        let w2 = random_matrix(rng, 2, 5).scale(0.7);
        Sequential::new(vec![
            Layer::Dense(DenseLayer::normalized(w1, 2, 11, AonMode::Standard)),
            Layer::BatchNorm(BatchNormLayer::new(5)),
            Layer::Relu,
            Layer::Dense(DenseLayer::normalized(w2, 2, 13, AonMode::Standard)),
        ])
    }

    #[test]
    fn end_to_end_gradcheck_dense_aon_bn_relu_ce() {
        let mut rng = test_rng(21);
        let mut model = two_layer_net(&mut rng);
        let x = Value::Flat(random_matrix(&mut rng, 4, 3));
        let labels = [0usize, 1, 0, 1];

        // settle the power states a little, then hold them fixed
        for _ in 0..20 {
            let _ = model.forward(&x, ForwardMode::Train).unwrap();
        }

        let loss_of = |model: &mut Sequential<f64>| -> f64 {
            let (out, _) = model.forward(&x, ForwardMode::Probe).unwrap();
            let (loss, _) = softmax_cross_entropy_batch(out.as_flat().unwrap(), &labels).unwrap();
            loss
        };

        let (out, caches) = model.forward(&x, ForwardMode::Probe).unwrap();
        let (_, grad_logits) =
            softmax_cross_entropy_batch(out.as_flat().unwrap(), &labels).unwrap();
        let grads = model.backward(Value::Flat(grad_logits), &caches).unwrap();

        let step = 1e-5;
        for li in 0..model.layers.len() {
            for slot in 0..grads.layers[li].len() {
                let len = grads.layers[li][slot].len();
                let mut max_rel: f64 = 0.0;
                for idx in 0..len {
                    let orig = model.param_slices()[li][slot][idx];
                    model.param_slices_mut()[li][slot][idx] = orig + step;
                    let plus = loss_of(&mut model);
                    model.param_slices_mut()[li][slot][idx] = orig - step;
                    let minus = loss_of(&mut model);
                    model.param_slices_mut()[li][slot][idx] = orig;
                    let fd = (plus - minus) / (2.0 * step);
                    let a = grads.layers[li][slot][idx];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                    max_rel = max_rel.max(rel);
                }
                assert!(
                    max_rel < 1e-4,
                    "layer {li} slot {slot}: max rel error {max_rel}"
                );
            }
        }
    }

    #[test]
    fn conv_equals_dense_on_im2col_patches() {
        let mut rng = test_rng(22);
        let x = random_tensor(&mut rng, [2, 2, 4, 4]);
        let kernel = random_tensor(&mut rng, [3, 2, 3, 3]);
        let flat = crate::tensor::conv_reshape(&kernel);

        let mut conv = ConvLayer::plain(kernel, 1, 1);
        let (conv_out, _) = conv.forward(&x, ForwardMode::Train).unwrap();

        // expand patches by hand and push them through a dense layer
        let (oh, ow) = (4, 4);
        let mut patches = Matrix::zeros(2 * oh * ow, 2 * 3 * 3);
        for b in 0..2 {
            for i in 0..oh {
                for j in 0..ow {
                    let row = (b * oh + i) * ow + j;
                    let mut cidx = 0;
                    for c in 0..2 {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let yi = i as isize + ki as isize - 1;
                                let xj = j as isize + kj as isize - 1;
                                let v = if yi >= 0 && yi < 4 && xj >= 0 && xj < 4 {
                                    x.get(b, c, yi as usize, xj as usize)
                                } else {
                                    0.0
                                };
                                patches.set(row, cidx, v);
                                cidx += 1;
                            }
                        }
                    }
                }
            }
        }
        let mut dense = DenseLayer::plain(flat);
        let (dense_out, _) = dense.forward(&patches, ForwardMode::Train).unwrap();

        for b in 0..2 {
            for o in 0..3 {
                for i in 0..oh {
                    for j in 0..ow {
                        let row = (b * oh + i) * ow + j;
                        let diff = (conv_out.get(b, o, i, j) - dense_out.get(row, o)).abs();
                        assert!(diff < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn frozen_model_outputs_are_bitwise_stable() {
        let mut rng = test_rng(23);
        let mut model = two_layer_net(&mut rng);
        let x = Value::Flat(random_matrix(&mut rng, 3, 3));
        for _ in 0..10 {
            let _ = model.forward(&x, ForwardMode::Train).unwrap();
        }
        model.freeze().unwrap();
        assert!(model.is_frozen());
        let (a, _) = model.forward(&x, ForwardMode::Eval).unwrap();
        let (b, _) = model.forward(&x, ForwardMode::Eval).unwrap();
        assert_eq!(a.as_flat().unwrap(), b.as_flat().unwrap());
        // freezing twice changes nothing
        let snapshot = model.clone();
        model.freeze().unwrap();
        assert_eq!(model, snapshot);
    }

    #[test]
    fn freeze_then_eval_matches_pre_freeze_eval() {
        let mut rng = test_rng(24);
        let mut model = two_layer_net(&mut rng);
        let x = Value::Flat(random_matrix(&mut rng, 3, 3));
        for _ in 0..10 {
            let _ = model.forward(&x, ForwardMode::Train).unwrap();
        }
        // eval before freezing already uses fixed state + running stats
        let mut bn_frozen = model.clone();
        for l in &mut bn_frozen.layers {
            if let Layer::BatchNorm(b) = l {
                b.training = false;
            }
        }
        let (before, _) = bn_frozen.forward(&x, ForwardMode::Eval).unwrap();
        model.freeze().unwrap();
        let (after, _) = model.forward(&x, ForwardMode::Eval).unwrap();
        assert_eq!(before.as_flat().unwrap(), after.as_flat().unwrap());
    }

    #[test]
    fn cnn_pipeline_runs_forward_and_backward() {
        let mut rng = test_rng(25);
        let kernel = random_tensor(&mut rng, [4, 1, 3, 3]);
        let w = random_matrix(&mut rng, 2, 16);
        let mut model = Sequential::new(vec![
            Layer::Conv(ConvLayer::normalized(kernel, 2, 31, AonMode::Standard, 1, 1)),
            Layer::Relu,
            Layer::MaxPool2,
            Layer::Flatten,
            Layer::Dense(DenseLayer::plain(w)),
        ]);
        let x = Value::Image(random_tensor(&mut rng, [2, 1, 4, 4]));
        let labels = [0usize, 1];
        let (out, caches) = model.forward(&x, ForwardMode::Train).unwrap();
        let (loss, grad) = softmax_cross_entropy_batch(out.as_flat().unwrap(), &labels).unwrap();
        assert!(loss.is_finite());
        let grads = model.backward(Value::Flat(grad), &caches).unwrap();
        assert_eq!(grads.layers.len(), 5);
        assert!(!grads.layers[0].is_empty());
        assert!(grads.layers[1].is_empty());
    }
}
