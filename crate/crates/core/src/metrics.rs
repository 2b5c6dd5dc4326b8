//! Classification metrics and performance retention ratios.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub true_labels: Vec<usize>,
    pub predicted_labels: Vec<usize>,
    /// `n x K` class probabilities.
    pub class_scores: Array2<f64>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

impl PredictionSet {
    /// Builds a prediction set from probability rows, predicting the row argmax.
    pub fn from_scores(true_labels: Vec<usize>, class_scores: Array2<f64>) -> Result<Self> {
        let predicted_labels = class_scores
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().unwrap_or(&r.to_vec())))
            .collect();
        let set = PredictionSet {
            true_labels,
            predicted_labels,
            class_scores,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_scores.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.true_labels.len();
        let k = self.class_scores.ncols();
        if self.predicted_labels.len() != n || self.class_scores.nrows() != n {
            return Err(Error::dims(format!(
                "{n} labels, {} predictions, {} score rows",
                self.predicted_labels.len(),
                self.class_scores.nrows()
            )));
        }
        if let Some(&bad) = self
            .true_labels
            .iter()
            .chain(&self.predicted_labels)
            .find(|&&c| c >= k)
        {
            return Err(Error::invalid(format!("class id {bad} outside 0..{k}")));
        }
        for (i, row) in self.class_scores.rows().into_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("score row {i}")));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("score row {i} sums to {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f: f64,
    pub macro_auc: f64,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 3] = ["accuracy", "macro_f", "macro_auc"];

    pub fn values(&self) -> [f64; 3] {
        [self.accuracy, self.macro_f, self.macro_auc]
    }

    pub fn from_values(v: [f64; 3]) -> Self {
        MetricsReport {
            accuracy: v[0],
            macro_f: v[1],
            macro_auc: v[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrrReport {
    pub accuracy: f64,
    pub macro_f: f64,
    pub macro_auc: f64,
}

impl PrrReport {
    pub fn values(&self) -> [f64; 3] {
        [self.accuracy, self.macro_f, self.macro_auc]
    }
}

fn non_empty(preds: &PredictionSet) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::invalid("empty prediction set"));
    }
    Ok(())
}

pub fn accuracy(preds: &PredictionSet) -> Result<f64> {
    non_empty(preds)?;
    let correct = preds
        .true_labels
        .iter()
        .zip(&preds.predicted_labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1 over `class_count` classes. A class with no
/// predictions, no true members or zero precision and recall scores 0.
pub fn macro_f_measure(preds: &PredictionSet, class_count: usize) -> Result<f64> {
    non_empty(preds)?;
    if class_count == 0 {
        return Err(Error::invalid("class_count must be positive"));
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fn_ = vec![0usize; class_count];
    for (&t, &p) in preds.true_labels.iter().zip(&preds.predicted_labels) {
        if t >= class_count || p >= class_count {
            return Err(Error::invalid(format!("class id outside 0..{class_count}")));
        }
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let total: f64 = (0..class_count)
        .map(|k| {
            if tp[k] == 0 {
                // covers TP+FP = 0, TP+FN = 0 and P+R = 0
                return 0.0;
            }
            let p = tp[k] as f64 / (tp[k] + fp[k]) as f64;
            let r = tp[k] as f64 / (tp[k] + fn_[k]) as f64;
            2.0 * p * r / (p + r)
        })
        .sum();
    Ok(total / class_count as f64)
}

/// Mann–Whitney AUC for one score column, or `None` without both positives and
/// negatives. Ties between a positive and a negative earn half credit.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .copied()
        .zip(positive.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // twice the credit, kept in integers until the end
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let pos_here = pairs[i..j].iter().filter(|p| p.1).count() as u128;
        let neg_here = (j - i) as u128 - pos_here;
        doubled += pos_here * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    Some(doubled as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Mean one-vs-rest AUC over the classes that have both positives and negatives.
pub fn macro_ovr_auc(preds: &PredictionSet, class_count: usize) -> Result<f64> {
    non_empty(preds)?;
    if preds.class_scores.ncols() < class_count {
        return Err(Error::dims(format!(
            "{} score columns for {class_count} classes",
            preds.class_scores.ncols()
        )));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for k in 0..class_count {
        let col: Vec<f64> = preds.class_scores.column(k).to_vec();
        let pos: Vec<bool> = preds.true_labels.iter().map(|&t| t == k).collect();
        if let Some(a) = binary_auc(&col, &pos) {
            sum += a;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::invalid(
            "no class has both positive and negative samples",
        ));
    }
    Ok(sum / used as f64)
}

pub fn evaluate(preds: &PredictionSet, class_count: usize) -> Result<MetricsReport> {
    Ok(MetricsReport {
        accuracy: accuracy(preds)?,
        macro_f: macro_f_measure(preds, class_count)?,
        macro_auc: macro_ovr_auc(preds, class_count)?,
    })
}

pub fn prr(method: &MetricsReport, baseline: &MetricsReport) -> Result<PrrReport> {
    let ratio = |name: &str, m: f64, b: f64| {
        if b > 0.0 {
            Ok(m / b)
        } else {
            Err(Error::invalid(format!(
                "baseline {name} is {b}; ratio undefined"
            )))
        }
    };
    Ok(PrrReport {
        accuracy: ratio("accuracy", method.accuracy, baseline.accuracy)?,
        macro_f: ratio("macro_f", method.macro_f, baseline.macro_f)?,
        macro_auc: ratio("macro_auc", method.macro_auc, baseline.macro_auc)?,
    })
}

/// Convenience for score matrices that are already row-normalized views.
pub fn predictions_from_view(
    true_labels: &[usize],
    scores: ArrayView2<f64>,
) -> Result<PredictionSet> {
    PredictionSet::from_scores(true_labels.to_vec(), scores.to_owned())
}
