//! Confusion-matrix classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Actual positives.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Actual negatives.
    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn add(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Count confusion cells; labels and predictions must be equal-length,
/// non-empty binary vectors.
pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionCounts> {
    if labels.len() != predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty inputs".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::InvalidArgument(format!("non-binary pair ({y}, {p})"))),
        }
    }
    Ok(c)
}

/// Accuracy plus support-weighted precision/recall/F1 across both classes.
/// With support weighting, recall always equals accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any per-class precision or recall had a zero denominator
    /// and was defined as 0.
    pub zero_division: bool,
}

fn safe_div(num: f64, den: f64, flag: &mut bool) -> f64 {
    if den == 0.0 {
        *flag = true;
        0.0
    } else {
        num / den
    }
}

pub fn classification_report(c: &ConfusionCounts) -> Result<ClassificationReport> {
    let total = c.total();
    if total == 0 {
        return Err(Error::MetricUndefined("empty confusion counts".into()));
    }
    let mut zero_division = false;

    let p_sup = c.positives() as f64;
    let n_sup = c.negatives() as f64;
    let total = total as f64;

    // positive class
    let prec_pos = safe_div(c.tp as f64, (c.tp + c.fp) as f64, &mut zero_division);
    let rec_pos = safe_div(c.tp as f64, p_sup, &mut zero_division);
    let f1_pos = if prec_pos + rec_pos > 0.0 {
        2.0 * prec_pos * rec_pos / (prec_pos + rec_pos)
    } else {
        0.0
    };
    // negative class
    let prec_neg = safe_div(c.tn as f64, (c.tn + c.fn_) as f64, &mut zero_division);
    let rec_neg = safe_div(c.tn as f64, n_sup, &mut zero_division);
    let f1_neg = if prec_neg + rec_neg > 0.0 {
        2.0 * prec_neg * rec_neg / (prec_neg + rec_neg)
    } else {
        0.0
    };

    Ok(ClassificationReport {
        accuracy: (c.tp + c.tn) as f64 / total,
        precision: (prec_pos * p_sup + prec_neg * n_sup) / total,
        recall: (rec_pos * p_sup + rec_neg * n_sup) / total,
        f1: (f1_pos * p_sup + f1_neg * n_sup) / total,
        zero_division,
    })
}
