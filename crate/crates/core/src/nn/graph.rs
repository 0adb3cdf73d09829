//! Sequential forward pass with a recorded trace, and the matching
//! reverse-mode backward pass.

use super::activation::{relu_like_backward, relu_like_forward, softmax_rows};
use super::conv::{conv2d_backward, conv2d_forward, conv3d_backward, conv3d_forward};
use super::dense::{dense_backward, dense_forward};
use super::dropout::dropout_forward;
use super::loss::softmax_cross_entropy;
use super::norm::{batchnorm_backward, batchnorm_forward, BatchStats, NormCache, NormParams};
use super::{Activation, Float, LayerParams, LayerSpec, ModelSpec, Params, Tensor};
use crate::error::{Error, Result};
use crate::rng::Pcg32;

/// Training enables dropout and batch statistics in trainable batch-norm layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
enum Cache<T> {
    None,
    Norm(NormCache<T>),
    Dropout(Option<Vec<T>>),
}

/// Everything a backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    mode: Mode,
    version: u64,
    inputs: Vec<Tensor<T>>,
    caches: Vec<Cache<T>>,
    /// Input of the final softmax.
    pub logits: Tensor<T>,
    /// Class probabilities.
    pub probs: Tensor<T>,
}

impl<T: Float> Trace<T> {
    /// Input tensor of layer `i` (any layer but the final softmax).
    pub fn layer_input(&self, i: usize) -> &Tensor<T> {
        &self.inputs[i]
    }
}

/// Gradients of one trainable layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrads<T> {
    Affine { weight: Tensor<T>, bias: Tensor<T> },
    Norm { gamma: Tensor<T>, beta: Tensor<T> },
}

impl<T: Float> LayerGrads<T> {
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            LayerGrads::Affine { weight, bias } => vec![("weight", weight), ("bias", bias)],
            LayerGrads::Norm { gamma, beta } => vec![("gamma", gamma), ("beta", beta)],
        }
    }
}

/// Per-layer gradients (`None` for frozen or parameter-free layers) and the
/// batch loss they were computed from.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub layers: Vec<Option<LayerGrads<T>>>,
    pub loss: f64,
}

fn check_input<T: Float>(spec: &ModelSpec, x: &Tensor<T>) -> Result<()> {
    let s = x.shape();
    if s.len() != spec.input_shape.len() + 1 || s[1..] != spec.input_shape[..] {
        return Err(Error::Dimension(format!(
            "input batch {s:?} does not match model input {:?}",
            spec.input_shape
        )));
    }
    Ok(())
}

fn run_layer<T: Float>(
    layer: &super::Layer,
    lp: &LayerParams<T>,
    x: &Tensor<T>,
    mode: Mode,
    rng: &mut Pcg32,
) -> Result<(Tensor<T>, Cache<T>)> {
    let n = x.batch();
    let out = match (&layer.spec, lp) {
        (LayerSpec::Dense { .. }, LayerParams::Affine { weight, bias }) => (dense_forward(x, weight, bias)?, Cache::None),
        (LayerSpec::Conv3d { .. }, LayerParams::Affine { weight, bias }) => (conv3d_forward(x, weight, bias)?, Cache::None),
        (LayerSpec::Conv2d { .. }, LayerParams::Affine { weight, bias }) => (conv2d_forward(x, weight, bias)?, Cache::None),
        (LayerSpec::BatchNorm { epsilon, .. }, LayerParams::Norm { gamma, beta, running_mean, running_var }) => {
            let p = NormParams { gamma, beta, running_mean, running_var, epsilon: *epsilon };
            let use_batch = mode == Mode::Train && !layer.frozen;
            let (y, cache) = batchnorm_forward(x, &p, use_batch)?;
            (y, Cache::Norm(cache))
        }
        (LayerSpec::Dropout { rate }, _) => {
            let (y, mask) = dropout_forward(x, *rate, mode == Mode::Train, rng);
            (y, Cache::Dropout(mask))
        }
        (LayerSpec::Act(Activation::Relu), _) => (relu_like_forward(x, 0.0), Cache::None),
        (LayerSpec::Act(Activation::LeakyRelu { alpha }), _) => (relu_like_forward(x, *alpha), Cache::None),
        (LayerSpec::Act(Activation::Softmax), _) => (softmax_rows(x), Cache::None),
        (LayerSpec::Flatten, _) => {
            let width = x.len() / n.max(1);
            (x.clone().reshape(vec![n, width])?, Cache::None)
        }
        (LayerSpec::Reshape3dTo2d, _) => {
            let s = x.shape();
            if s.len() != 5 {
                return Err(Error::Dimension(format!("3d-to-2d reshape needs rank 5, got {s:?}")));
            }
            (x.clone().reshape(vec![s[0], s[1] * s[2], s[3], s[4]])?, Cache::None)
        }
        (spec, _) => return Err(Error::Shape(format!("layer {spec:?} has mismatched parameters"))),
    };
    Ok(out)
}

fn run<T: Float>(
    spec: &ModelSpec,
    params: &Params<T>,
    x: Tensor<T>,
    mode: Mode,
    rng: &mut Pcg32,
    keep: bool,
) -> Result<Trace<T>> {
    if params.layers.len() != spec.layers.len() {
        return Err(Error::Shape("parameters do not match the model".into()));
    }
    let last = spec.layers.len() - 1;
    let mut inputs = Vec::new();
    let mut caches = Vec::new();
    let mut h = x;
    for i in 0..last {
        let (y, cache) = run_layer(&spec.layers[i], &params.layers[i], &h, mode, rng)?;
        if keep {
            inputs.push(h);
            caches.push(cache);
        }
        h = y;
    }
    let probs = softmax_rows(&h);
    Ok(Trace { mode, version: params.version(), inputs, caches, logits: h, probs })
}

/// Runs every layer in order, recording the intermediates backward needs.
pub fn forward<T: Float>(
    spec: &ModelSpec,
    params: &Params<T>,
    x: &Tensor<T>,
    mode: Mode,
    rng: &mut Pcg32,
) -> Result<Trace<T>> {
    check_input(spec, x)?;
    run(spec, params, x.clone(), mode, rng, true)
}

/// Inference-mode class probabilities without keeping a trace.
pub fn predict_proba<T: Float>(spec: &ModelSpec, params: &Params<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    check_input(spec, x)?;
    let mut rng = Pcg32::seeded(0);
    Ok(run(spec, params, x.clone(), Mode::Infer, &mut rng, false)?.probs)
}

/// Reverse-mode pass from the cross-entropy loss of `trace` against `labels`.
///
/// Only layers that are parameterized and not frozen receive gradients;
/// propagation stops at the earliest trainable layer.
pub fn backward<T: Float>(
    spec: &ModelSpec,
    params: &Params<T>,
    trace: &Trace<T>,
    labels: &[usize],
) -> Result<Grads<T>> {
    if trace.mode != Mode::Train {
        return Err(Error::Contract("backward needs a trace recorded in training mode".into()));
    }
    if trace.version != params.version() || trace.inputs.len() + 1 != spec.layers.len() {
        return Err(Error::Contract("trace is stale: parameters changed since the forward pass".into()));
    }
    let loss = softmax_cross_entropy(&trace.logits, labels)?;
    let mut grads: Vec<Option<LayerGrads<T>>> = vec![None; spec.layers.len()];
    let Some(first) = spec.first_trainable() else {
        return Ok(Grads { layers: grads, loss: loss.loss });
    };

    let mut g = loss.dlogits;
    for i in (first..spec.layers.len() - 1).rev() {
        let layer = &spec.layers[i];
        let x = &trace.inputs[i];
        let need_dx = i > first;
        let trainable = !layer.frozen;
        g = match (&layer.spec, &params.layers[i]) {
            (LayerSpec::Dense { .. }, LayerParams::Affine { weight, .. }) => {
                let d = dense_backward(x, weight, &g, need_dx)?;
                if trainable {
                    grads[i] = Some(LayerGrads::Affine { weight: d.dw, bias: d.db });
                }
                match d.dx {
                    Some(dx) => dx,
                    None => break,
                }
            }
            (LayerSpec::Conv3d { .. } | LayerSpec::Conv2d { .. }, LayerParams::Affine { weight, .. }) => {
                let d = if matches!(layer.spec, LayerSpec::Conv3d { .. }) {
                    conv3d_backward(x, weight, &g, need_dx)?
                } else {
                    conv2d_backward(x, weight, &g, need_dx)?
                };
                if trainable {
                    grads[i] = Some(LayerGrads::Affine { weight: d.dk, bias: d.db });
                }
                match d.dx {
                    Some(dx) => dx,
                    None => break,
                }
            }
            (LayerSpec::BatchNorm { .. }, LayerParams::Norm { gamma, .. }) => {
                let Cache::Norm(cache) = &trace.caches[i] else {
                    return Err(Error::Contract(format!("missing batch-norm cache for layer {i}")));
                };
                let d = batchnorm_backward(cache, gamma, &g)?;
                if trainable {
                    grads[i] = Some(LayerGrads::Norm { gamma: d.dgamma, beta: d.dbeta });
                }
                d.dx
            }
            (LayerSpec::Dropout { .. }, _) => match &trace.caches[i] {
                Cache::Dropout(Some(mask)) => {
                    let data = g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect();
                    Tensor::new(g.shape().to_vec(), data)?
                }
                _ => g,
            },
            (LayerSpec::Act(Activation::Relu), _) => relu_like_backward(x, &g, 0.0),
            (LayerSpec::Act(Activation::LeakyRelu { alpha }), _) => relu_like_backward(x, &g, *alpha),
            (LayerSpec::Flatten | LayerSpec::Reshape3dTo2d, _) => g.reshape(x.shape().to_vec())?,
            (spec, _) => return Err(Error::Contract(format!("cannot differentiate {spec:?} here"))),
        };
    }
    Ok(Grads { layers: grads, loss: loss.loss })
}

/// Folds the batch statistics recorded in `trace` into the running
/// statistics of every trainable batch-norm layer:
/// `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running_stats<T: Float>(spec: &ModelSpec, params: &mut Params<T>, trace: &Trace<T>) {
    let mut changed = false;
    for (i, layer) in spec.layers.iter().enumerate() {
        let LayerSpec::BatchNorm { momentum, .. } = layer.spec else { continue };
        let Some(Cache::Norm(cache)) = trace.caches.get(i) else { continue };
        let BatchStats::Batch { mean, var } = &cache.stats else { continue };
        if let LayerParams::Norm { running_mean, running_var, .. } = &mut params.layers[i] {
            for (r, &m) in running_mean.data_mut().iter_mut().zip(mean) {
                *r = T::from_f64(momentum * r.as_f64() + (1.0 - momentum) * m);
            }
            for (r, &v) in running_var.data_mut().iter_mut().zip(var) {
                *r = T::from_f64(momentum * r.as_f64() + (1.0 - momentum) * v);
            }
            changed = true;
        }
    }
    if changed {
        params.touch();
    }
}
