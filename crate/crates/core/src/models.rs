//! The four architectures and transfer-learning surgery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_layer, Float, Layer, LayerParams, LayerSpec, ModelSpec, Params, DEFAULT_LEAKY_ALPHA};
use crate::rng::Pcg32;

/// Spectral depths of the three 3D convolutions.
pub const CNN_SPECTRAL_KERNELS: [usize; 3] = [7, 5, 3];
/// Smallest band count the CNN spectral stack accepts.
pub const CNN_MIN_BANDS: usize = 13;
pub const CNN_DROPOUT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Cnn,
    Mlp1,
    Mlp2,
    Mlp3,
}

impl VariantKind {
    pub fn is_mlp(self) -> bool {
        self != VariantKind::Cnn
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(VariantKind::Cnn),
            "mlp1" => Ok(VariantKind::Mlp1),
            "mlp2" => Ok(VariantKind::Mlp2),
            "mlp3" => Ok(VariantKind::Mlp3),
            _ => Err(Error::Config(format!("unknown model variant `{s}` (cnn, mlp1, mlp2, mlp3)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub kind: VariantKind,
    pub window: usize,
    pub components: usize,
    pub n_classes: usize,
    #[serde(default = "default_alpha")]
    pub leaky_alpha: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_LEAKY_ALPHA
}

impl ModelVariant {
    pub fn new(kind: VariantKind, window: usize, components: usize, n_classes: usize) -> Self {
        ModelVariant { kind, window, components, n_classes, leaky_alpha: DEFAULT_LEAKY_ALPHA }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self.kind {
            VariantKind::Cnn => vec![1, self.components, self.window, self.window],
            _ => vec![self.window * self.window * self.components],
        }
    }
}

fn dense_bn_relu(layers: &mut Vec<LayerSpec>, inputs: usize, widths: &[usize]) -> usize {
    let mut d = inputs;
    for &w in widths {
        layers.push(LayerSpec::dense(d, w));
        layers.push(LayerSpec::batch_norm(w));
        layers.push(LayerSpec::relu());
        d = w;
    }
    d
}

pub fn build_model(v: &ModelVariant) -> Result<ModelSpec> {
    if v.window == 0 || v.window.is_multiple_of(2) {
        return Err(Error::Build(format!("window must be odd, got {}", v.window)));
    }
    if v.components == 0 || v.n_classes < 2 {
        return Err(Error::Build(format!(
            "need at least one component and two classes, got {} and {}",
            v.components, v.n_classes
        )));
    }
    let k = v.n_classes;
    let mut layers = Vec::new();
    match v.kind {
        VariantKind::Cnn => {
            if v.components < CNN_MIN_BANDS {
                return Err(Error::Build(format!(
                    "the spectral convolution stack needs at least {CNN_MIN_BANDS} bands, got {}",
                    v.components
                )));
            }
            let mut ch = 1;
            for (&kd, oc) in CNN_SPECTRAL_KERNELS.iter().zip([8, 16, 32]) {
                layers.push(LayerSpec::Conv3d { in_ch: ch, out_ch: oc, k_spec: kd });
                layers.push(LayerSpec::relu());
                ch = oc;
            }
            let depth = v.components + 3 - CNN_SPECTRAL_KERNELS.iter().sum::<usize>();
            layers.push(LayerSpec::Reshape3dTo2d);
            layers.push(LayerSpec::Conv2d { in_ch: 32 * depth, out_ch: 64 });
            layers.push(LayerSpec::relu());
            layers.push(LayerSpec::Flatten);
            let mut d = 64 * v.window * v.window;
            for w in [256, 128] {
                layers.push(LayerSpec::dense(d, w));
                layers.push(LayerSpec::leaky_relu(v.leaky_alpha));
                layers.push(LayerSpec::Dropout { rate: CNN_DROPOUT });
                d = w;
            }
            layers.push(LayerSpec::dense(d, k));
        }
        VariantKind::Mlp1 => {
            let n = v.window * v.window * v.components;
            layers.extend([
                LayerSpec::dense(n, 10000),
                LayerSpec::relu(),
                LayerSpec::dense(10000, 5000),
                LayerSpec::relu(),
                LayerSpec::dense(5000, k),
            ]);
        }
        VariantKind::Mlp2 => {
            let d = dense_bn_relu(&mut layers, v.window * v.window * v.components, &[472, 168]);
            layers.push(LayerSpec::dense(d, k));
        }
        VariantKind::Mlp3 => {
            let d = dense_bn_relu(&mut layers, v.window * v.window * v.components, &[1024, 512, 256, 128, 72]);
            layers.push(LayerSpec::dense(d, k));
        }
    }
    layers.push(LayerSpec::softmax());
    ModelSpec::new(v.input_shape(), k, layers)
}

/// Dense head: hidden widths with an activation (and optional dropout)
/// after each, then a softmax classifier.
pub fn dense_head(inputs: usize, hidden: &[usize], n_classes: usize, dropout: Option<f64>) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut d = inputs;
    for &w in hidden {
        layers.push(LayerSpec::dense(d, w));
        layers.push(LayerSpec::relu());
        if let Some(rate) = dropout {
            layers.push(LayerSpec::Dropout { rate });
        }
        d = w;
    }
    layers.push(LayerSpec::dense(d, n_classes));
    layers.push(LayerSpec::softmax());
    layers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgerySpec {
    /// Dense, convolution and batch-norm layers to remove from the end; the
    /// activations, dropout and reshapes in between go with them.
    pub drop_last: usize,
    pub head: Vec<LayerSpec>,
    #[serde(default = "yes")]
    pub freeze_retained: bool,
    #[serde(default = "default_head_seed")]
    pub head_seed: u64,
}

fn yes() -> bool {
    true
}

fn default_head_seed() -> u64 {
    42
}

/// Number of layers kept when removing `drop_last` counted layers from the end.
fn retained_len(spec: &ModelSpec, drop_last: usize) -> Result<usize> {
    let counted = spec.layers.iter().filter(|l| l.spec.is_parameterized()).count();
    if drop_last >= counted {
        return Err(Error::Surgery {
            expected: format!("fewer than {counted} layers to drop"),
            got: drop_last.to_string(),
        });
    }
    let mut keep = spec.layers.len();
    let mut dropped = 0;
    while dropped < drop_last {
        keep -= 1;
        if spec.layers[keep].spec.is_parameterized() {
            dropped += 1;
        }
    }
    Ok(keep)
}

/// Architecture after surgery, without touching any parameters.
pub fn surgery_spec(trained: &ModelSpec, surgery: &SurgerySpec) -> Result<ModelSpec> {
    let keep = retained_len(trained, surgery.drop_last)?;
    let head_classes = surgery
        .head
        .iter()
        .rev()
        .find_map(|l| match l {
            LayerSpec::Dense { out, .. } => Some(*out),
            _ => None,
        })
        .ok_or_else(|| Error::Surgery { expected: "a head ending in dense + softmax".into(), got: "no dense layer".into() })?;
    if !surgery.head.last().is_some_and(LayerSpec::is_softmax) {
        return Err(Error::Surgery { expected: "a head ending in softmax".into(), got: format!("{:?}", surgery.head.last()) });
    }

    let mut junction = trained.input_shape.clone();
    for l in &trained.layers[..keep] {
        junction = l.spec.output_shape(&junction)?;
    }
    if let Some(first) = surgery.head.first() {
        if first.output_shape(&junction).is_err() {
            let got = match *first {
                LayerSpec::Dense { inputs, .. } => format!("head input width {inputs}"),
                LayerSpec::Conv2d { in_ch, .. } | LayerSpec::Conv3d { in_ch, .. } => format!("head input channels {in_ch}"),
                LayerSpec::BatchNorm { features, .. } => format!("head input features {features}"),
                ref other => format!("{other:?}"),
            };
            return Err(Error::Surgery { expected: format!("junction shape {junction:?}"), got });
        }
    }

    let mut layers: Vec<Layer> = trained.layers[..keep]
        .iter()
        .map(|l| Layer { spec: l.spec, frozen: l.frozen || surgery.freeze_retained })
        .collect();
    layers.extend(surgery.head.iter().copied().map(Layer::new));
    let spec = ModelSpec { input_shape: trained.input_shape.clone(), n_classes: head_classes, layers };
    spec.validate().map_err(|e| Error::Surgery { expected: "a composable head".into(), got: e.to_string() })?;
    Ok(spec)
}

/// Truncates a trained model, freezes what remains and appends a head
/// initialized from `surgery.head_seed`.
pub fn transfer_surgery<T: Float>(
    trained: (&ModelSpec, &Params<T>),
    surgery: &SurgerySpec,
) -> Result<(ModelSpec, Params<T>)> {
    let (spec, params) = trained;
    params.check(spec)?;
    let new_spec = surgery_spec(spec, surgery)?;
    let keep = retained_len(spec, surgery.drop_last)?;
    let mut rng = Pcg32::seeded(surgery.head_seed);
    let mut layers: Vec<LayerParams<T>> = params.layers[..keep].to_vec();
    for i in keep..new_spec.layers.len() {
        layers.push(init_layer(&new_spec, i, &mut rng));
    }
    Ok((new_spec, Params::new(layers)))
}

/// Surgery for the CNN: keep both convolution stacks (through the flatten),
/// freeze them, and append dense 256/128/64 with ReLU and dropout plus a
/// softmax classifier.
pub fn cnn_transfer_surgery(trained: &ModelSpec, n_classes: usize, head_seed: u64) -> Result<SurgerySpec> {
    let flatten = trained
        .layers
        .iter()
        .position(|l| matches!(l.spec, LayerSpec::Flatten))
        .ok_or_else(|| Error::Surgery { expected: "a convolutional model with a flatten layer".into(), got: "none".into() })?;
    let drop_last = trained.layers[flatten..].iter().filter(|l| l.spec.is_parameterized()).count();
    let width: usize = trained.shapes()?[flatten].iter().product();
    Ok(SurgerySpec {
        drop_last,
        head: dense_head(width, &[256, 128, 64], n_classes, Some(CNN_DROPOUT)),
        freeze_retained: true,
        head_seed,
    })
}

pub fn cnn_transfer_default<T: Float>(
    trained: (&ModelSpec, &Params<T>),
    n_classes: usize,
    head_seed: u64,
) -> Result<(ModelSpec, Params<T>)> {
    let surgery = cnn_transfer_surgery(trained.0, n_classes, head_seed)?;
    transfer_surgery(trained, &surgery)
}

/// Surgeries that turn the Indian Pines MLPs into their 9-class transfer forms.
pub fn mlp_transfer_surgery(kind: VariantKind, trained: &ModelSpec, n_classes: usize, head_seed: u64) -> Result<SurgerySpec> {
    let (drop_last, hidden): (usize, &[usize]) = match kind {
        VariantKind::Mlp1 => (2, &[5000]),
        VariantKind::Mlp2 => (1, &[72]),
        VariantKind::Mlp3 => (3, &[72, 32]),
        VariantKind::Cnn => return cnn_transfer_surgery(trained, n_classes, head_seed),
    };
    let keep = retained_len(trained, drop_last)?;
    let mut shape = trained.input_shape.clone();
    for l in &trained.layers[..keep] {
        shape = l.spec.output_shape(&shape)?;
    }
    let width = shape.iter().product();
    Ok(SurgerySpec { drop_last, head: dense_head(width, hidden, n_classes, None), freeze_retained: true, head_seed })
}

/// Indices of layers whose tensors are frozen.
pub fn frozen_layers(spec: &ModelSpec) -> Vec<usize> {
    spec.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.frozen && l.spec.is_parameterized())
        .map(|(i, _)| i)
        .collect()
}
