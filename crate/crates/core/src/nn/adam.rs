use serde::{Deserialize, Serialize};

use super::{Float, Grads, Params, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moments per trainable tensor, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    moments: Vec<Vec<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Float> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState { config, t: 0, moments: Vec::new() }
    }

    /// `(m, v)` of tensor `k` of layer `layer`, if that tensor was ever updated.
    pub fn moments(&self, layer: usize, k: usize) -> Option<(&Tensor<T>, &Tensor<T>)> {
        self.moments.get(layer)?.get(k).map(|(m, v)| (m, v))
    }
}

/// One bias-corrected Adam update of every tensor that has a gradient.
///
/// All gradients are checked for finiteness before anything is modified.
pub fn adam_step<T: Float>(params: &mut Params<T>, grads: &Grads<T>, state: &mut AdamState<T>) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::Shape("gradients do not match parameters".into()));
    }
    for (i, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        for (name, t) in g.tensors() {
            if !t.is_finite() {
                return Err(Error::Numeric { tensor: format!("{i}.{name}") });
            }
        }
    }

    state.t += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.t as i32);
    let bc2 = 1.0 - c.beta2.powi(state.t as i32);
    let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
    let (bc1, bc2) = (T::from_f64(bc1), T::from_f64(bc2));
    let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.epsilon));

    if state.moments.len() < params.layers.len() {
        state.moments.resize_with(params.layers.len(), Vec::new);
    }
    for (i, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        let targets = params.layers[i].trainable_mut();
        let grads_i = g.tensors();
        if targets.len() != grads_i.len() {
            return Err(Error::Shape(format!("layer {i}: gradient kinds do not match parameters")));
        }
        let slots = &mut state.moments[i];
        if slots.is_empty() {
            *slots = grads_i.iter().map(|(_, t)| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape()))).collect();
        }
        for (((name, p), (_, gt)), (m, v)) in targets.into_iter().zip(grads_i).zip(slots.iter_mut()) {
            if p.shape() != gt.shape() || m.shape() != gt.shape() {
                return Err(Error::Shape(format!("{i}.{name}: gradient shape {:?} != {:?}", gt.shape(), p.shape())));
            }
            let iter = p.data_mut().iter_mut().zip(gt.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((pv, &gv), (mv, vv)) in iter {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    params.touch();
    Ok(())
}
