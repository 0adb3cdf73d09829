use super::{Float, Tensor};
use crate::error::{Error, Result};

pub struct LossOutput<T> {
    /// Mean negative log-likelihood of the true classes.
    pub loss: f64,
    /// `(probs - onehot) / n`.
    pub dlogits: Tensor<T>,
    pub probs: Tensor<T>,
}

/// Softmax followed by categorical cross-entropy over `logits: [n, k]`.
pub fn softmax_cross_entropy<T: Float>(logits: &Tensor<T>, labels: &[usize]) -> Result<LossOutput<T>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::Dimension(format!(
            "logits {shape:?} do not match {} labels",
            labels.len()
        )));
    }
    let (n, k) = (shape[0], shape[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label(format!("label {bad} out of range for {k} classes")));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut dlogits = Vec::with_capacity(n * k);
    let mut total = 0.0;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        total += sum.ln() - (row[label].as_f64() - max);
        for (c, e) in exps.iter().enumerate() {
            let p = e / sum;
            probs.push(T::from_f64(p));
            let target = if c == label { 1.0 } else { 0.0 };
            dlogits.push(T::from_f64((p - target) / n as f64));
        }
    }
    Ok(LossOutput {
        loss: total / n as f64,
        dlogits: Tensor::new(vec![n, k], dlogits)?,
        probs: Tensor::new(vec![n, k], probs)?,
    })
}
