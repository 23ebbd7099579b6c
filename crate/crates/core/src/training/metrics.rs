//! Classification metrics.

use serde::{Deserialize, Serialize};

use super::trainer::PreparedData;
use crate::error::{Error, Result};
use crate::network::{Mode, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
}

/// Confusion matrix (rows true class, columns prediction) and the scores
/// derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Vec<Vec<u64>>,
    pub oa: f64,
    pub ma: f64,
    pub per_class: PerClass,
}

impl MetricsReport {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let c = confusion.len();
        if c == 0 || confusion.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidInput(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidInput("confusion matrix is empty".into()));
        }
        let correct: u64 = (0..c).map(|i| confusion[i][i]).sum();
        let support: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
        let predicted: Vec<u64> = (0..c)
            .map(|j| confusion.iter().map(|row| row[j]).sum())
            .collect();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let recall: Vec<f64> = (0..c).map(|i| ratio(confusion[i][i], support[i])).collect();
        let precision: Vec<f64> = (0..c)
            .map(|i| ratio(confusion[i][i], predicted[i]))
            .collect();
        let f1 = precision
            .iter()
            .zip(&recall)
            .map(|(&p, &r)| {
                if p + r == 0.0 {
                    0.0
                } else {
                    2.0 * p * r / (p + r)
                }
            })
            .collect();
        let present: Vec<f64> = (0..c)
            .filter(|&i| support[i] > 0)
            .map(|i| recall[i])
            .collect();
        let ma = present.iter().sum::<f64>() / present.len() as f64;
        Ok(MetricsReport {
            oa: correct as f64 / total as f64,
            ma,
            per_class: PerClass {
                precision,
                recall,
                f1,
                support,
            },
            confusion,
        })
    }

    pub fn from_predictions(
        labels: &[usize],
        predictions: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::InvalidInput(
                "labels and predictions differ in length".into(),
            ));
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&y, &p) in labels.iter().zip(predictions) {
            if y >= num_classes || p >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "class index out of range ({y}, {p})"
                )));
            }
            confusion[y][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("metrics JSON: {e}")))
    }
}

/// Evaluates `model` on the clouds at `indices` in evaluation mode.
pub fn evaluate(
    model: &mut Model,
    data: &PreparedData,
    indices: &[usize],
    batch_size: usize,
) -> Result<MetricsReport> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty split".into()));
    }
    let mut predictions = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk)?;
        let logits = model.forward(&batch, Mode::Eval)?;
        for row in logits.rows() {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            predictions.push(best);
        }
    }
    let labels: Vec<usize> = indices.iter().map(|&i| data.labels[i]).collect();
    MetricsReport::from_predictions(&labels, &predictions, data.num_classes)
}
