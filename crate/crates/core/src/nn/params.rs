use sha2::{Digest, Sha256};

use super::conv::KERNEL;
use super::{Activation, Float, LayerSpec, ModelSpec, Tensor};
use crate::error::{Error, Result};
use crate::rng::Pcg32;

/// Tensors owned by one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T> {
    None,
    /// Dense (`weight: [in, out]`) or convolution (`weight: [oc, ch, (kd,) 3, 3]`).
    Affine { weight: Tensor<T>, bias: Tensor<T> },
    Norm {
        gamma: Tensor<T>,
        beta: Tensor<T>,
        running_mean: Tensor<T>,
        running_var: Tensor<T>,
    },
}

impl<T: Float> LayerParams<T> {
    /// `(suffix, tensor)` pairs in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Affine { weight, bias } => vec![("weight", weight), ("bias", bias)],
            LayerParams::Norm { gamma, beta, running_mean, running_var } => vec![
                ("gamma", gamma),
                ("beta", beta),
                ("running_mean", running_mean),
                ("running_var", running_var),
            ],
        }
    }

    /// Tensors an optimizer may update, in the same order as [`super::LayerGrads::tensors`].
    pub fn trainable_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Affine { weight, bias } => vec![("weight", weight), ("bias", bias)],
            LayerParams::Norm { gamma, beta, .. } => vec![("gamma", gamma), ("beta", beta)],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Affine { weight, bias } => vec![("weight", weight), ("bias", bias)],
            LayerParams::Norm { gamma, beta, running_mean, running_var } => vec![
                ("gamma", gamma),
                ("beta", beta),
                ("running_mean", running_mean),
                ("running_var", running_var),
            ],
        }
    }
}

/// All parameter tensors of a model, aligned with `ModelSpec::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub layers: Vec<LayerParams<T>>,
    version: u64,
}

impl<T: Float> Params<T> {
    pub fn new(layers: Vec<LayerParams<T>>) -> Self {
        Params { layers, version: 0 }
    }

    /// Bumped on every in-place update; traces record it to detect staleness.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn touch(&mut self) {
        self.version += 1;
    }

    /// Every tensor with its name `"<layer>.<suffix>"`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, lp)| lp.tensors().into_iter().map(move |(s, t)| (format!("{i}.{s}"), t)))
            .collect()
    }

    /// Checks every tensor shape against the model layout.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "{} parameter groups for {} layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, lp)) in spec.layers.iter().zip(&self.layers).enumerate() {
            let expected = expected_shapes(&layer.spec);
            let got: Vec<Vec<usize>> = lp.tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
            if expected != got {
                return Err(Error::Shape(format!("layer {i}: expected tensors {expected:?}, got {got:?}")));
            }
        }
        Ok(())
    }

    /// SHA-256 over the little-endian bytes of the tensors of the given layers.
    pub fn checksum(&self, layers: impl IntoIterator<Item = usize>) -> String {
        let mut hasher = Sha256::new();
        for i in layers {
            for (name, t) in self.layers[i].tensors() {
                hasher.update(format!("{i}.{name}").as_bytes());
                hasher.update(t.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<U: Float>(&self) -> Params<U> {
        let layers = self
            .layers
            .iter()
            .map(|lp| match lp {
                LayerParams::None => LayerParams::None,
                LayerParams::Affine { weight, bias } => LayerParams::Affine { weight: weight.cast(), bias: bias.cast() },
                LayerParams::Norm { gamma, beta, running_mean, running_var } => LayerParams::Norm {
                    gamma: gamma.cast(),
                    beta: beta.cast(),
                    running_mean: running_mean.cast(),
                    running_var: running_var.cast(),
                },
            })
            .collect();
        Params { layers, version: 0 }
    }
}

/// Shapes of the tensors a layer owns, in storage order.
pub fn expected_shapes(spec: &LayerSpec) -> Vec<Vec<usize>> {
    match *spec {
        LayerSpec::Dense { inputs, out } => vec![vec![inputs, out], vec![out]],
        LayerSpec::Conv3d { in_ch, out_ch, k_spec } => {
            vec![vec![out_ch, in_ch, k_spec, KERNEL, KERNEL], vec![out_ch]]
        }
        LayerSpec::Conv2d { in_ch, out_ch } => vec![vec![out_ch, in_ch, KERNEL, KERNEL], vec![out_ch]],
        LayerSpec::BatchNorm { features, .. } => vec![vec![features]; 4],
        _ => vec![],
    }
}

fn fans(spec: &LayerSpec) -> (usize, usize) {
    let taps = KERNEL * KERNEL;
    match *spec {
        LayerSpec::Dense { inputs, out } => (inputs, out),
        LayerSpec::Conv3d { in_ch, out_ch, k_spec } => (in_ch * k_spec * taps, out_ch * k_spec * taps),
        LayerSpec::Conv2d { in_ch, out_ch } => (in_ch * taps, out_ch * taps),
        _ => (0, 0),
    }
}

/// Activation that consumes the output of `layers[index]`, looking through
/// shape-only, normalization and dropout layers.
fn fed_activation(layers: &[super::Layer], index: usize) -> Option<Activation> {
    for l in &layers[index + 1..] {
        match l.spec {
            LayerSpec::Act(a) => return Some(a),
            LayerSpec::Dense { .. } | LayerSpec::Conv3d { .. } | LayerSpec::Conv2d { .. } => return None,
            _ => {}
        }
    }
    None
}

/// Fresh tensors for `spec.layers[index]`, drawing weights from `rng`.
///
/// Weights are uniform in `(-a, a)` with `a = sqrt(6 / fan_in)` for layers
/// feeding ReLU/LeakyReLU and `a = sqrt(6 / (fan_in + fan_out))` otherwise
/// (the softmax-feeding layer). Biases and betas start at 0, gammas at 1,
/// running statistics at mean 0 / variance 1.
pub fn init_layer<T: Float>(spec: &ModelSpec, index: usize, rng: &mut Pcg32) -> LayerParams<T> {
    let layer = &spec.layers[index].spec;
    match *layer {
        LayerSpec::Dense { .. } | LayerSpec::Conv3d { .. } | LayerSpec::Conv2d { .. } => {
            let shapes = expected_shapes(layer);
            let a = init_bound(spec, index);
            let n: usize = shapes[0].iter().product();
            let data = (0..n).map(|_| T::from_f64(rng.symmetric(a))).collect();
            LayerParams::Affine {
                weight: Tensor::new(shapes[0].clone(), data).expect("shape"),
                bias: Tensor::zeros(&shapes[1]),
            }
        }
        LayerSpec::BatchNorm { features, .. } => LayerParams::Norm {
            gamma: Tensor::filled(&[features], T::one()),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], T::one()),
        },
        _ => LayerParams::None,
    }
}

/// Initializes every layer in spec order from `PCG32(seed)`.
pub fn init_params<T: Float>(spec: &ModelSpec, seed: u64) -> Result<Params<T>> {
    spec.validate()?;
    let mut rng = Pcg32::seeded(seed);
    Ok(Params::new((0..spec.layers.len()).map(|i| init_layer(spec, i, &mut rng)).collect()))
}

/// Weight bound used by [`init_layer`] for `spec.layers[index]`.
pub fn init_bound(spec: &ModelSpec, index: usize) -> f64 {
    let layer = &spec.layers[index].spec;
    let (fan_in, fan_out) = fans(layer);
    match fed_activation(&spec.layers, index) {
        Some(Activation::Relu) | Some(Activation::LeakyRelu { .. }) => (6.0 / fan_in as f64).sqrt(),
        _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}
