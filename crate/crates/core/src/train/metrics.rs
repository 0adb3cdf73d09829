use serde::Serialize;

use super::{batch_tensor, check_compatible};
use crate::error::{Error, Result};
use crate::nn::{predict_proba, Float, ModelSpec, Params};
use crate::prep::PatchSet;

const EVAL_BATCH: usize = 256;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Float>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `k x k` counts indexed `[true][predicted]` over zero-based class ids.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if preds.len() != labels.len() {
        return Err(Error::Label(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut m = vec![vec![0; k]; k];
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= k || t >= k {
            return Err(Error::Label(format!("class pair ({t}, {p}) outside 0..{k}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    #[serde(rename = "oa")]
    pub overall_accuracy: f64,
    #[serde(rename = "aa")]
    pub average_accuracy: f64,
    pub loss: f64,
    /// Recall per class; `None` for classes absent from the evaluated set.
    pub per_class: Vec<Option<f64>>,
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<usize>>, loss: f64) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let hits: usize = (0..confusion.len()).map(|c| confusion[c][c]).sum();
        let per_class: Vec<Option<f64>> = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let support: usize = row.iter().sum();
                (support > 0).then(|| row[c] as f64 / support as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        Metrics {
            overall_accuracy: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            average_accuracy: if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 },
            loss,
            per_class,
            confusion,
        }
    }

    /// Aligned plain-text summary.
    pub fn table(&self, class_names: &[String]) -> String {
        let width = class_names.iter().map(String::len).max().unwrap_or(0).max(5);
        let mut s = format!("{:<width$}  {:>7}  {:>7}\n", "class", "support", "recall");
        for (c, row) in self.confusion.iter().enumerate() {
            let name = class_names.get(c).cloned().unwrap_or_else(|| format!("{}", c + 1));
            let support: usize = row.iter().sum();
            let recall = self.per_class[c].map_or("-".to_string(), |r| format!("{r:.4}"));
            s.push_str(&format!("{name:<width$}  {support:>7}  {recall:>7}\n"));
        }
        s.push_str(&format!("OA {:.4}  AA {:.4}  loss {:.6}\n", self.overall_accuracy, self.average_accuracy, self.loss));
        s
    }
}

/// Inference-mode metrics over `test`.
pub fn evaluate<T: Float>(spec: &ModelSpec, params: &Params<T>, test: &PatchSet) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Evaluation("test set is empty".into()));
    }
    check_compatible(spec, test)?;
    let targets = test.targets();
    let k = spec.n_classes;
    let mut preds = Vec::with_capacity(test.len());
    let mut loss_sum = 0.0;
    let all: Vec<usize> = (0..test.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let x = batch_tensor::<T>(test, idx)?;
        let probs = predict_proba(spec, params, &x)?;
        preds.extend(probs.data().chunks(k).map(argmax));
        let labels = &targets[idx[0]..idx[0] + idx.len()];
        for (row, &l) in probs.data().chunks(k).zip(labels) {
            loss_sum -= row[l].as_f64().max(f64::MIN_POSITIVE).ln();
        }
    }
    Ok(Metrics::from_confusion(confusion_matrix(&preds, &targets, k)?, loss_sum / test.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_cells() {
        assert_eq!(confusion_matrix(&[0, 1], &[0, 1], 2).unwrap(), vec![vec![1, 0], vec![0, 1]]);
        let m = confusion_matrix(&[2], &[1], 3).unwrap();
        assert_eq!(m[1][2], 1);
        assert_eq!(m.iter().flatten().sum::<usize>(), 1);
        assert!(matches!(confusion_matrix(&[3], &[0], 3), Err(Error::Label(_))));
    }

    #[test]
    fn constant_prediction_on_balanced_set() {
        let m = Metrics::from_confusion(confusion_matrix(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap(), 0.0);
        assert_eq!(m.overall_accuracy, 0.5);
        assert_eq!(m.average_accuracy, 0.5);
    }

    #[test]
    fn absent_class_excluded_from_average() {
        let m = Metrics::from_confusion(confusion_matrix(&[0, 0, 1], &[0, 0, 0], 3).unwrap(), 0.0);
        assert_eq!(m.per_class, vec![Some(2.0 / 3.0), None, None]);
        assert_eq!(m.average_accuracy, 2.0 / 3.0);
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(&[0.2f32, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
    }
}
