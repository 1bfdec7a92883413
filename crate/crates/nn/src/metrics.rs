//! Confusion-matrix metrics with macro averaging.

use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest accuracy.
    pub accuracy: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_samples: u64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_predictions(
        truth: &[usize],
        predicted: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(NnError::Config(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            for label in [t, p] {
                if label >= num_classes {
                    return Err(NnError::LabelOutOfRange { label, num_classes });
                }
            }
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    /// Every metric derived from a square confusion matrix. Undefined ratios
    /// (no predictions or no support for a class) count as 0.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = confusion.len();
        if k == 0 || confusion.iter().any(|row| row.len() != k) {
            return Err(NnError::Config(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let support: u64 = confusion[c].iter().sum();
                let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                let tn = total + tp - support - predicted;
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    accuracy: ratio(tp + tn, total),
                    support,
                }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
        Ok(Self {
            num_samples: total,
            accuracy: ratio(correct, total),
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            macro_accuracy: mean(|c| c.accuracy),
            per_class,
            confusion,
            loss: None,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// Confusion matrix as CSV, rows true classes, columns predictions.
    pub fn confusion_csv(&self) -> String {
        let k = self.num_classes();
        let mut out = String::from("true\\predicted");
        for c in 0..k {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Index of the largest logit; the first wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
