use serde::{Deserialize, Serialize};

use super::PatchSet;
use crate::error::{Error, Result};
use crate::rng::Pcg32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

/// Shuffled train/test index lists. The training side gets
/// `floor(train_fraction * n)` samples, per class when stratified.
pub fn split_indices(y: &[u16], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 samples to split, got {n}")));
    }
    let mut rng = Pcg32::seeded(spec.seed);
    if !spec.stratified {
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let n_train = (spec.train_fraction * n as f64).floor() as usize;
        if n_train == 0 || n_train == n {
            return Err(Error::Split(format!(
                "train fraction {} leaves an empty side for {n} samples",
                spec.train_fraction
            )));
        }
        let test = idx.split_off(n_train);
        return Ok((idx, test));
    }

    let max_class = y.iter().copied().max().unwrap_or(0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in 1..=max_class {
        let mut idx: Vec<usize> = (0..n).filter(|&i| y[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        rng.shuffle(&mut idx);
        let n_train = (spec.train_fraction * idx.len() as f64).floor() as usize;
        if n_train < 1 {
            return Err(Error::Split(format!(
                "class {class} has {} samples and gets no training sample",
                idx.len()
            )));
        }
        let rest = idx.split_off(n_train);
        train.extend(idx);
        test.extend(rest);
    }
    Ok((train, test))
}

pub fn split_train_test(p: &PatchSet, spec: &SplitSpec) -> Result<(PatchSet, PatchSet)> {
    let (train, test) = split_indices(&p.y, spec)?;
    Ok((p.subset(&train), p.subset(&test)))
}
