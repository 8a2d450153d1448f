use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K × K` counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { classes: k, counts: rows.concat() })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), predicted.len())));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p, 1)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize, count: u64) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::Config(format!("class pair ({truth}, {predicted}) outside {} classes", self.classes)));
        }
        self.counts[truth * self.classes + predicted] += count;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn support(&self, k: usize) -> u64 {
        (0..self.classes).map(|j| self.get(k, j)).sum()
    }

    pub fn predicted(&self, k: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, k)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a denominator was zero and the value was defined as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
}

impl Metrics {
    pub fn macro_recall(&self) -> f64 {
        self.per_class.iter().map(|c| c.recall).sum::<f64>() / self.per_class.len() as f64
    }

    pub fn macro_f1(&self) -> f64 {
        self.per_class.iter().map(|c| c.f1).sum::<f64>() / self.per_class.len() as f64
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class precision, recall and F1 plus overall accuracy.
pub fn class_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if cm.classes() == 0 || total == 0 {
        return Err(Error::Empty("confusion matrix has no counts".into()));
    }
    let per_class = (0..cm.classes())
        .map(|k| {
            let tp = cm.get(k, k);
            let (precision, precision_undefined) = ratio(tp, cm.predicted(k));
            let (recall, recall_undefined) = ratio(tp, cm.support(k));
            let (f1, f1_undefined) = if precision + recall == 0.0 {
                (0.0, true)
            } else {
                (2.0 * precision * recall / (precision + recall), false)
            };
            ClassMetrics { precision, recall, f1, support: cm.support(k), precision_undefined, recall_undefined, f1_undefined }
        })
        .collect();
    Ok(Metrics { per_class, accuracy: cm.trace() as f64 / total as f64 })
}
