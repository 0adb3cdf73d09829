use super::{Float, Tensor};
use crate::error::{Error, Result};

/// Which statistics a batch-norm forward pass normalized with.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchStats {
    /// Batch mean and biased batch variance; kept for the running-stat update.
    Batch { mean: Vec<f64>, var: Vec<f64> },
    Running,
}

/// Values a batch-norm backward pass needs.
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub stats: BatchStats,
}

pub struct NormParams<'a, T> {
    pub gamma: &'a Tensor<T>,
    pub beta: &'a Tensor<T>,
    pub running_mean: &'a Tensor<T>,
    pub running_var: &'a Tensor<T>,
    pub epsilon: f64,
}

/// Batch normalization over `x: [n, f]`.
///
/// With `use_batch_stats` the batch mean and biased variance (divisor `n`)
/// normalize the input and `n >= 2` is required; otherwise the running
/// statistics are used.
pub fn batchnorm_forward<T: Float>(
    x: &Tensor<T>,
    p: &NormParams<'_, T>,
    use_batch_stats: bool,
) -> Result<(Tensor<T>, NormCache<T>)> {
    let xs = x.shape();
    if xs.len() != 2 || p.gamma.shape() != [xs[1]] {
        return Err(Error::Dimension(format!(
            "batch norm over {:?} features cannot take input {xs:?}",
            p.gamma.shape()
        )));
    }
    let (n, f) = (xs[0], xs[1]);
    let xd = x.data();
    let (mean, var, stats) = if use_batch_stats {
        if n < 2 {
            return Err(Error::Batch(format!("batch norm in training mode needs n >= 2, got {n}")));
        }
        let mut mean = vec![0.0f64; f];
        for row in xd.chunks_exact(f) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0f64; f];
        for row in xd.chunks_exact(f) {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v.as_f64() - m;
                *s += d * d;
            }
        }
        for s in &mut var {
            *s /= n as f64;
        }
        (mean.clone(), var.clone(), BatchStats::Batch { mean, var })
    } else {
        (p.running_mean.to_f64_vec(), p.running_var.to_f64_vec(), BatchStats::Running)
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::from_f64(1.0 / (v + p.epsilon).sqrt())).collect();
    let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64(m)).collect();
    let (gamma, beta) = (p.gamma.data(), p.beta.data());
    let mut xhat = vec![T::zero(); n * f];
    let mut y = vec![T::zero(); n * f];
    for i in 0..n {
        for j in 0..f {
            let h = (xd[i * f + j] - mean_t[j]) * inv_std[j];
            xhat[i * f + j] = h;
            y[i * f + j] = gamma[j] * h + beta[j];
        }
    }
    Ok((
        Tensor::new(vec![n, f], y)?,
        NormCache { xhat: Tensor::new(vec![n, f], xhat)?, inv_std, stats },
    ))
}

pub struct NormGrads<T> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

pub fn batchnorm_backward<T: Float>(cache: &NormCache<T>, gamma: &Tensor<T>, dy: &Tensor<T>) -> Result<NormGrads<T>> {
    let shape = cache.xhat.shape();
    if dy.shape() != shape {
        return Err(Error::Dimension(format!("batch norm upstream gradient {:?} != {shape:?}", dy.shape())));
    }
    let (n, f) = (shape[0], shape[1]);
    let (xh, dyd, g) = (cache.xhat.data(), dy.data(), gamma.data());
    let mut dgamma = vec![T::zero(); f];
    let mut dbeta = vec![T::zero(); f];
    for i in 0..n {
        for j in 0..f {
            dgamma[j] = dgamma[j] + dyd[i * f + j] * xh[i * f + j];
            dbeta[j] = dbeta[j] + dyd[i * f + j];
        }
    }
    let mut dx = vec![T::zero(); n * f];
    match cache.stats {
        BatchStats::Batch { .. } => {
            // The input gradient sums to zero over the batch (the output is
            // shift invariant); centering enforces that against rounding in xhat.
            let nf = T::from_f64(n as f64);
            let mut t = vec![T::zero(); n];
            for j in 0..f {
                let scale = g[j] * cache.inv_std[j] / nf;
                let mut mean = T::zero();
                for (i, ti) in t.iter_mut().enumerate() {
                    let k = i * f + j;
                    *ti = nf * dyd[k] - dbeta[j] - xh[k] * dgamma[j];
                    mean = mean + *ti;
                }
                mean = mean / nf;
                for (i, &ti) in t.iter().enumerate() {
                    dx[i * f + j] = scale * (ti - mean);
                }
            }
        }
        BatchStats::Running => {
            for i in 0..n {
                for j in 0..f {
                    dx[i * f + j] = dyd[i * f + j] * g[j] * cache.inv_std[j];
                }
            }
        }
    }
    Ok(NormGrads {
        dx: Tensor::new(vec![n, f], dx)?,
        dgamma: Tensor::new(vec![f], dgamma)?,
        dbeta: Tensor::new(vec![f], dbeta)?,
    })
}
