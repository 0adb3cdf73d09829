//! Mini-batch training, evaluation metrics and whole-scene prediction.

mod map;
mod metrics;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use map::{predict_map, predict_pixels};
pub use metrics::{argmax, confusion_matrix, evaluate, Metrics};

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward, update_running_stats, AdamConfig, AdamState, Float, LayerSpec, Mode, ModelSpec,
    Params, Tensor,
};
use crate::prep::PatchSet;
use crate::rng::Pcg32;

pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Log every this many batches; 0 logs only epoch summaries.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, batch_size: DEFAULT_BATCH_SIZE, seed: DEFAULT_SEED, adam: AdamConfig::default(), log_every: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    /// Sample-weighted mean training loss.
    pub loss: f64,
    /// Training-mode accuracy over the epoch's batches.
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Shuffle and dropout streams of epoch `epoch`.
pub fn epoch_streams(seed: u64, epoch: usize) -> (Pcg32, Pcg32) {
    let e = epoch as u64;
    (Pcg32::new(seed, 2 * e), Pcg32::new(seed, 2 * e + 1))
}

/// Stacks the given samples into a `[n, ...input_shape]` tensor.
pub fn batch_tensor<T: Float>(set: &PatchSet, indices: &[usize]) -> Result<Tensor<T>> {
    let mut shape = vec![indices.len()];
    shape.extend(set.input_shape());
    let mut data = Vec::with_capacity(indices.len() * set.sample_len());
    for &i in indices {
        data.extend(set.sample(i).iter().map(|&v| T::from_f64(v as f64)));
    }
    Tensor::new(shape, data)
}

/// Checks that `set` fits the model input and class count.
pub fn check_compatible(spec: &ModelSpec, set: &PatchSet) -> Result<()> {
    if set.input_shape() != spec.input_shape {
        return Err(Error::Dimension(format!(
            "samples have shape {:?} but the model expects {:?}",
            set.input_shape(),
            spec.input_shape
        )));
    }
    if let Some(&bad) = set.y.iter().find(|&&l| l == 0 || usize::from(l) > spec.n_classes) {
        return Err(Error::Label(format!("label {bad} outside 1..={}", spec.n_classes)));
    }
    Ok(())
}

fn trains_batch_norm(spec: &ModelSpec) -> bool {
    spec.layers.iter().any(|l| matches!(l.spec, LayerSpec::BatchNorm { .. }) && !l.frozen)
}

/// Consecutive batches over `order`; with `min_two`, a trailing singleton is
/// merged into the batch before it.
pub fn batches(order: &[usize], batch_size: usize, min_two: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = (start + batch_size).min(order.len());
        if min_two && order.len() - end == 1 && end > start {
            end = order.len();
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

/// Trains `params` in place with Adam; frozen layers are never modified.
pub fn train<T: Float>(spec: &ModelSpec, params: &mut Params<T>, data: &PatchSet, cfg: &TrainConfig) -> Result<History> {
    let mut history = History::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    check_compatible(spec, data)?;
    params.check(spec)?;
    let min_two = trains_batch_norm(spec);
    if cfg.batch_size == 0 || (min_two && cfg.batch_size < 2) {
        return Err(Error::Config(format!(
            "batch size {} is too small{}",
            cfg.batch_size,
            if min_two { " for batch normalization" } else { "" }
        )));
    }
    if min_two && data.len() < 2 {
        return Err(Error::Batch("batch normalization needs at least two training samples".into()));
    }

    let targets = data.targets();
    let mut adam = AdamState::new(cfg.adam);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let (mut shuffle, mut dropout) = epoch_streams(cfg.seed, epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        shuffle.shuffle(&mut order);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches(&order, cfg.batch_size, min_two).into_iter().enumerate() {
            let x = batch_tensor::<T>(data, idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let trace = forward(spec, params, &x, Mode::Train, &mut dropout)?;
            let grads = backward(spec, params, &trace, &labels)?;
            if !grads.loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss: grads.loss });
            }
            adam_step(params, &grads, &mut adam)?;
            update_running_stats(spec, params, &trace);

            loss_sum += grads.loss * idx.len() as f64;
            let k = spec.n_classes;
            correct += trace.probs.data().chunks(k).zip(&labels).filter(|(row, &l)| argmax(row) == l).count();
            if cfg.log_every > 0 && (b + 1) % cfg.log_every == 0 {
                log::info!("epoch {} batch {} loss {:.6}", epoch + 1, b + 1, grads.loss);
            }
        }
        let record = EpochRecord {
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!("epoch {} loss {:.6} accuracy {:.4}", epoch + 1, record.loss, record.accuracy);
        history.epochs.push(record);
    }
    Ok(history)
}
