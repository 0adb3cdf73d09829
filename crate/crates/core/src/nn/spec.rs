use serde::{Deserialize, Serialize};

use super::conv::KERNEL;
use super::Activation;
use crate::error::{Error, Result};

pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

/// One layer of a sequential model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        out: usize,
    },
    /// 3x3 spatial kernel spanning `k_spec` bands.
    Conv3d { in_ch: usize, out_ch: usize, k_spec: usize },
    /// 3x3 kernel.
    Conv2d { in_ch: usize, out_ch: usize },
    BatchNorm { features: usize, momentum: f64, epsilon: f64 },
    Dropout { rate: f64 },
    #[serde(rename = "activation")]
    Act(Activation),
    Flatten,
    /// `[ch, depth, h, w]` -> `[ch * depth, h, w]`.
    #[serde(rename = "reshape_3d_to_2d")]
    Reshape3dTo2d,
}

impl LayerSpec {
    pub fn dense(inputs: usize, out: usize) -> Self {
        LayerSpec::Dense { inputs, out }
    }

    pub fn batch_norm(features: usize) -> Self {
        LayerSpec::BatchNorm { features, momentum: DEFAULT_BN_MOMENTUM, epsilon: DEFAULT_BN_EPSILON }
    }

    pub fn relu() -> Self {
        LayerSpec::Act(Activation::Relu)
    }

    pub fn leaky_relu(alpha: f64) -> Self {
        LayerSpec::Act(Activation::LeakyRelu { alpha })
    }

    pub fn softmax() -> Self {
        LayerSpec::Act(Activation::Softmax)
    }

    /// Number of scalars this layer trains (running statistics excluded).
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, out } => inputs * out + out,
            LayerSpec::Conv3d { in_ch, out_ch, k_spec } => out_ch * in_ch * k_spec * KERNEL * KERNEL + out_ch,
            LayerSpec::Conv2d { in_ch, out_ch } => out_ch * in_ch * KERNEL * KERNEL + out_ch,
            LayerSpec::BatchNorm { features, .. } => 2 * features,
            _ => 0,
        }
    }

    /// Dense, convolution and batch-norm layers: the ones that own tensors.
    pub fn is_parameterized(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Conv3d { .. } | LayerSpec::Conv2d { .. } | LayerSpec::BatchNorm { .. }
        )
    }

    pub fn is_softmax(&self) -> bool {
        matches!(self, LayerSpec::Act(Activation::Softmax))
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |why: String| Err(Error::Build(format!("{self:?} on input {input:?}: {why}")));
        match *self {
            LayerSpec::Dense { inputs, out } => {
                if inputs == 0 || out == 0 {
                    return bad("widths must be positive".into());
                }
                if input != [inputs] {
                    return bad(format!("expected flat input of {inputs}"));
                }
                Ok(vec![out])
            }
            LayerSpec::Conv3d { in_ch, out_ch, k_spec } => {
                if in_ch == 0 || out_ch == 0 || k_spec == 0 {
                    return bad("counts must be positive".into());
                }
                match input {
                    &[ch, d, h, w] if ch == in_ch && d >= k_spec && h > 0 && w > 0 => {
                        Ok(vec![out_ch, d - k_spec + 1, h, w])
                    }
                    _ => bad(format!("expected [{in_ch}, depth >= {k_spec}, h, w]")),
                }
            }
            LayerSpec::Conv2d { in_ch, out_ch } => {
                if in_ch == 0 || out_ch == 0 {
                    return bad("counts must be positive".into());
                }
                match input {
                    &[ch, h, w] if ch == in_ch && h > 0 && w > 0 => Ok(vec![out_ch, h, w]),
                    _ => bad(format!("expected [{in_ch}, h, w]")),
                }
            }
            LayerSpec::BatchNorm { features, momentum, epsilon } => {
                if features == 0 || !(0.0..1.0).contains(&momentum) || epsilon.is_nan() || epsilon <= 0.0 {
                    return bad("invalid batch-norm settings".into());
                }
                if input != [features] {
                    return bad(format!("expected flat input of {features}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad("dropout rate must lie in [0, 1)".into());
                }
                Ok(input.to_vec())
            }
            LayerSpec::Act(Activation::Softmax) => {
                if input.len() != 1 {
                    return bad("softmax needs a flat input".into());
                }
                Ok(input.to_vec())
            }
            LayerSpec::Act(Activation::LeakyRelu { alpha }) if !alpha.is_finite() => bad("alpha must be finite".into()),
            LayerSpec::Act(_) => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape3dTo2d => match input {
                &[c, d, h, w] => Ok(vec![c * d, h, w]),
                _ => bad("expected a rank-4 sample".into()),
            },
        }
    }
}

/// A layer plus its freeze flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    #[serde(default)]
    pub frozen: bool,
}

impl Layer {
    pub fn new(spec: LayerSpec) -> Self {
        Layer { spec, frozen: false }
    }
}

/// Ordered sequential architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub n_classes: usize,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ParamCount {
    pub trainable: usize,
    pub frozen: usize,
}

impl ModelSpec {
    /// Validates layer composition and returns the checked spec.
    pub fn new(input_shape: Vec<usize>, n_classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec { input_shape, n_classes, layers: layers.into_iter().map(Layer::new).collect() };
        spec.validate()?;
        Ok(spec)
    }

    /// Per-sample shape after every layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Build(format!("invalid input shape {:?}", self.input_shape)));
        }
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.spec.output_shape(&shape)?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes()?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Build("model has no layers".into()))?;
        if !last.spec.is_softmax() {
            return Err(Error::Build("the last layer must be a softmax activation".into()));
        }
        if self.layers[..self.layers.len() - 1].iter().any(|l| l.spec.is_softmax()) {
            return Err(Error::Build("softmax is only allowed as the final layer".into()));
        }
        if shapes.last().map(Vec::as_slice) != Some(&[self.n_classes][..]) {
            return Err(Error::Build(format!(
                "model ends in {:?} but declares {} classes",
                shapes.last(),
                self.n_classes
            )));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn first_trainable(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.spec.is_parameterized() && !l.frozen)
    }

    /// Trainable and frozen scalar counts; running statistics are never counted.
    pub fn count_params(&self) -> ParamCount {
        self.layers.iter().fold(ParamCount::default(), |mut acc, l| {
            if l.frozen {
                acc.frozen += l.spec.param_count();
            } else {
                acc.trainable += l.spec.param_count();
            }
            acc
        })
    }

    /// Dense widths along the model, starting with the flat input width.
    pub fn dense_architecture(&self) -> Vec<usize> {
        let mut arch = Vec::new();
        for l in &self.layers {
            if let LayerSpec::Dense { inputs, out } = l.spec {
                if arch.is_empty() {
                    arch.push(inputs);
                }
                arch.push(out);
            }
        }
        arch
    }
}

pub fn count_params(spec: &ModelSpec) -> ParamCount {
    spec.count_params()
}
