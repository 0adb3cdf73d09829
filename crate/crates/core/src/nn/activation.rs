use serde::{Deserialize, Serialize};

use super::{Float, Tensor};

pub const DEFAULT_LEAKY_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f64 },
    Softmax,
}

pub fn relu_like_forward<T: Float>(x: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let a = T::from_f64(alpha);
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { a * v }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Gradient through ReLU (`alpha = 0`) or LeakyReLU given the layer input.
pub fn relu_like_backward<T: Float>(x: &Tensor<T>, dy: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let a = T::from_f64(alpha);
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { a * g })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Row-wise softmax with max subtraction, evaluated in f64.
pub fn softmax_rows<T: Float>(logits: &Tensor<T>) -> Tensor<T> {
    let k = *logits.shape().last().unwrap_or(&1);
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k.max(1)) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::from_f64(e / sum)));
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}
