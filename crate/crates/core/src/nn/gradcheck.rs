//! Finite-difference verification of [`super::backward`].
//!
//! The loss difference `L(theta + h) - L(theta)` is obtained by pushing the
//! exact change of each layer's output through the rest of the network
//! (`f(a + d) - f(a)` rearranged so rounding scales with `d`, not `a`).
//! This is the same central difference as two full forward passes, minus
//! the cancellation that makes those useless for small or vanishing
//! gradients.

use super::conv::{conv2d_forward, conv3d_forward};
use super::dense::dense_forward;
use super::graph::{backward, forward, Mode, Trace};
use super::{Activation, LayerParams, LayerSpec, ModelSpec, Params, Tensor};
use crate::error::{Error, Result};
use crate::rng::Pcg32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// At most this many scalars per tensor are checked; larger tensors are
    /// subsampled without replacement.
    pub max_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-7, max_per_tensor: 500, seed: 0 }
    }
}

/// Largest relative error found and where.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `"<layer>.<tensor>[<flat index>]"` of the worst scalar.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Copy of `spec` with every dropout rate set to zero.
pub fn without_dropout(spec: &ModelSpec) -> ModelSpec {
    let mut s = spec.clone();
    for l in &mut s.layers {
        if let LayerSpec::Dropout { rate } = &mut l.spec {
            *rate = 0.0;
        }
    }
    s
}

fn zeros_like(t: &Tensor<f64>) -> Tensor<f64> {
    Tensor::zeros(t.shape())
}

fn one_hot(shape: &[usize], j: usize, h: f64) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    t.data_mut()[j] = h;
    t
}

/// Output change of layer `i` when tensor `k` entry `j` moves by `h`.
fn seed_delta(
    spec: &ModelSpec,
    params: &Params<f64>,
    trace: &Trace<f64>,
    i: usize,
    k: usize,
    j: usize,
    h: f64,
) -> Result<Tensor<f64>> {
    let x = trace.layer_input(i);
    match (&spec.layers[i].spec, &params.layers[i]) {
        (LayerSpec::Dense { .. }, LayerParams::Affine { weight, bias }) => {
            let zb = zeros_like(bias);
            if k == 0 {
                dense_forward(x, &one_hot(weight.shape(), j, h), &zb)
            } else {
                dense_forward(&zeros_like(x), &zeros_like(weight), &one_hot(bias.shape(), j, h))
            }
        }
        (LayerSpec::Conv3d { .. } | LayerSpec::Conv2d { .. }, LayerParams::Affine { weight, bias }) => {
            let conv = if matches!(spec.layers[i].spec, LayerSpec::Conv3d { .. }) { conv3d_forward } else { conv2d_forward };
            if k == 0 {
                conv(x, &one_hot(weight.shape(), j, h), &zeros_like(bias))
            } else {
                conv(&zeros_like(x), &zeros_like(weight), &one_hot(bias.shape(), j, h))
            }
        }
        (LayerSpec::BatchNorm { epsilon, .. }, LayerParams::Norm { .. }) => {
            let (n, f) = (x.shape()[0], x.shape()[1]);
            let mut d = vec![0.0; n * f];
            let col = j;
            if k == 0 {
                let (centered, inv_std) = batch_center(x, *epsilon);
                for s in 0..n {
                    d[s * f + col] = h * centered[s * f + col] * inv_std[col];
                }
            } else {
                for s in 0..n {
                    d[s * f + col] = h;
                }
            }
            Tensor::new(vec![n, f], d)
        }
        (other, _) => Err(Error::Contract(format!("layer {i} ({other:?}) has no trainable tensors"))),
    }
}

/// Centered input and `1 / sqrt(var + eps)` using the biased batch variance.
fn batch_center(x: &Tensor<f64>, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let xd = x.data();
    let mut mean = vec![0.0; f];
    for row in xd.chunks_exact(f) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = xd.iter().enumerate().map(|(q, &v)| v - mean[q % f]).collect();
    let mut var = vec![0.0; f];
    for row in centered.chunks_exact(f) {
        for (s, &c) in var.iter_mut().zip(row) {
            *s += c * c;
        }
    }
    let inv_std = var.iter().map(|&v| 1.0 / (v / n as f64 + eps).sqrt()).collect();
    (centered, inv_std)
}

/// Change of a batch-norm output for input change `dx` around input `x`,
/// with statistics taken from the batch.
fn batch_norm_delta(x: &Tensor<f64>, dx: &Tensor<f64>, gamma: &[f64], eps: f64) -> Result<Tensor<f64>> {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let (c, _) = batch_center(x, eps);
    let dd = dx.data();
    let nf = n as f64;
    let mut out = vec![0.0; n * f];
    for col in 0..f {
        let dmean = (0..n).map(|s| dd[s * f + col]).sum::<f64>() / nf;
        let dc: Vec<f64> = (0..n).map(|s| dd[s * f + col] - dmean).collect();
        let var = (0..n).map(|s| c[s * f + col] * c[s * f + col]).sum::<f64>() / nf;
        let dvar = (0..n).map(|s| (2.0 * c[s * f + col] + dc[s]) * dc[s]).sum::<f64>() / nf;
        let s0 = (var + eps).sqrt();
        let s1 = (var + dvar + eps).sqrt();
        for s in 0..n {
            let dxhat = dc[s] / s1 - c[s * f + col] * dvar / (s0 * s1 * (s0 + s1));
            out[s * f + col] = gamma[col] * dxhat;
        }
    }
    Tensor::new(vec![n, f], out)
}

/// `f(a + d) - f(a)` for ReLU-like `f`.
fn relu_delta(a: f64, d: f64, alpha: f64) -> f64 {
    let f = |v: f64| if v > 0.0 { v } else { alpha * v };
    match (a > 0.0, a + d > 0.0) {
        (true, true) => d,
        (false, false) => alpha * d,
        _ => f(a + d) - f(a),
    }
}

/// Pushes the output change of layer `from` to the logits.
fn propagate(spec: &ModelSpec, params: &Params<f64>, trace: &Trace<f64>, from: usize, mut d: Tensor<f64>) -> Result<Tensor<f64>> {
    let last = spec.layers.len() - 1;
    for i in from + 1..last {
        if d.data().iter().all(|&v| v == 0.0) {
            let out_shape = trace.logits.shape();
            return Ok(Tensor::zeros(out_shape));
        }
        let x = trace.layer_input(i);
        let layer = &spec.layers[i];
        d = match (&layer.spec, &params.layers[i]) {
            (LayerSpec::Dense { .. }, LayerParams::Affine { weight, bias }) => dense_forward(&d, weight, &zeros_like(bias))?,
            (LayerSpec::Conv3d { .. }, LayerParams::Affine { weight, bias }) => conv3d_forward(&d, weight, &zeros_like(bias))?,
            (LayerSpec::Conv2d { .. }, LayerParams::Affine { weight, bias }) => conv2d_forward(&d, weight, &zeros_like(bias))?,
            (LayerSpec::BatchNorm { epsilon, .. }, LayerParams::Norm { gamma, running_var, .. }) => {
                if layer.frozen {
                    let f = gamma.len();
                    let scale: Vec<f64> =
                        (0..f).map(|q| gamma.data()[q] / (running_var.data()[q] + epsilon).sqrt()).collect();
                    let data = d.data().iter().enumerate().map(|(q, &v)| v * scale[q % f]).collect();
                    Tensor::new(d.shape().to_vec(), data)?
                } else {
                    batch_norm_delta(x, &d, gamma.data(), *epsilon)?
                }
            }
            (LayerSpec::Dropout { .. }, _) => d,
            (LayerSpec::Act(a @ (Activation::Relu | Activation::LeakyRelu { .. })), _) => {
                let alpha = match a {
                    Activation::LeakyRelu { alpha } => *alpha,
                    _ => 0.0,
                };
                let data = x.data().iter().zip(d.data()).map(|(&a, &dv)| relu_delta(a, dv, alpha)).collect();
                Tensor::new(d.shape().to_vec(), data)?
            }
            (LayerSpec::Flatten | LayerSpec::Reshape3dTo2d, _) => {
                let mut shape = vec![x.shape()[0]];
                shape.extend(layer.spec.output_shape(&x.shape()[1..])?);
                d.reshape(shape)?
            }
            (other, _) => return Err(Error::Contract(format!("cannot propagate through {other:?}"))),
        };
    }
    Ok(d)
}

/// Mean cross-entropy change for logit change `dz` around logits `z`.
fn loss_delta(z: &Tensor<f64>, dz: &Tensor<f64>, labels: &[usize]) -> f64 {
    let k = z.shape()[1];
    let mut total = 0.0;
    for ((row, drow), &l) in z.data().chunks_exact(k).zip(dz.data().chunks_exact(k)).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = e.iter().sum();
        let s: f64 = e.iter().zip(drow).map(|(w, dv)| w / sum * dv.exp_m1()).sum();
        total += s.ln_1p() - drow[l];
    }
    total / labels.len() as f64
}

/// Compares backward against central differences of the loss, with dropout
/// disabled and batch-norm in training mode on the fixed batch.
pub fn grad_check(
    spec: &ModelSpec,
    params: &Params<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let spec = without_dropout(spec);
    let mut rng = Pcg32::seeded(config.seed);
    let trace = forward(&spec, params, x, Mode::Train, &mut rng)?;
    let grads = backward(&spec, params, &trace, labels)?;

    let h = config.step;
    let mut report = GradCheckReport { max_relative_error: 0.0, worst: String::new(), analytic: 0.0, numeric: 0.0, checked: 0 };
    let mut pick = Pcg32::new(config.seed, 1);
    let diff = |i: usize, k: usize, j: usize, step: f64| -> Result<f64> {
        let d = seed_delta(&spec, params, &trace, i, k, j, step)?;
        let dz = propagate(&spec, params, &trace, i, d)?;
        Ok(loss_delta(&trace.logits, &dz, labels))
    };

    for (i, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        for (k, (name, gt)) in g.tensors().into_iter().enumerate() {
            let mut idx: Vec<usize> = (0..gt.len()).collect();
            if idx.len() > config.max_per_tensor {
                pick.shuffle(&mut idx);
                idx.truncate(config.max_per_tensor);
                idx.sort_unstable();
            }
            for j in idx {
                let numeric = (diff(i, k, j, h)? - diff(i, k, j, -h)?) / (2.0 * h);
                let analytic = gt.data()[j];
                let err = relative_error(analytic, numeric);
                report.checked += 1;
                if err > report.max_relative_error || report.worst.is_empty() {
                    report.max_relative_error = err;
                    report.worst = format!("{i}.{name}[{j}]");
                    report.analytic = analytic;
                    report.numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    #[test]
    fn linear_softmax_model() {
        let spec = ModelSpec::new(vec![4], 3, vec![LayerSpec::dense(4, 3), LayerSpec::softmax()]).unwrap();
        let params = init_params::<f64>(&spec, 3).unwrap();
        let x = Tensor::from_f64(&[2, 4], &[0.3, -0.2, 0.5, 0.1, -0.4, 0.9, 0.0, 0.2]).unwrap();
        let r = grad_check(&spec, &params, &x, &[0, 2], &GradCheckConfig::default()).unwrap();
        assert_eq!(r.checked, 15);
        assert!(r.max_relative_error < 1e-8, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relu_delta_matches_direct_difference() {
        for (a, d) in [(1.0, 0.5), (-1.0, 0.5), (0.2, -0.5), (-0.2, 0.5), (0.0, 1e-3)] {
            let f = |v: f64| if v > 0.0 { v } else { 0.1 * v };
            assert!((relu_delta(a, d, 0.1) - (f(a + d) - f(a))).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_delta_matches_direct_difference() {
        let z = Tensor::from_f64(&[2, 3], &[0.1, -0.3, 0.7, 1.0, 0.0, -1.0]).unwrap();
        let dz = Tensor::from_f64(&[2, 3], &[0.01, 0.02, -0.03, 0.0, 0.05, 0.01]).unwrap();
        let mut z2 = z.clone();
        z2.data_mut().iter_mut().zip(dz.data()).for_each(|(a, b)| *a += b);
        let ce = |t: &Tensor<f64>| super::super::softmax_cross_entropy(t, &[2, 0]).unwrap().loss;
        assert!((loss_delta(&z, &dz, &[2, 0]) - (ce(&z2) - ce(&z))).abs() < 1e-14);
    }
}
