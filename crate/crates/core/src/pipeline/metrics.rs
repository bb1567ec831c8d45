use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the class has no positives.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: f64,
    pub macro_f1: f64,
    /// Mean AP over classes with positives; `None` without scores.
    pub map: Option<f64>,
    pub per_class: Vec<ClassStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Metrics {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

impl Metrics {
    /// Accuracy for classification, `None` for regression.
    pub fn acc(&self) -> Option<f64> {
        match self {
            Metrics::Classification(m) => Some(m.acc),
            Metrics::Regression(_) => None,
        }
    }

    /// The metric a table reports first: accuracy or MSE.
    pub fn headline(&self) -> f64 {
        match self {
            Metrics::Classification(m) => m.acc,
            Metrics::Regression(m) => m.mse,
        }
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(scores: ArrayView2<'_, f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

/// Accuracy, per-class precision/recall/F1 and, given `[n × K]` scores, AP.
pub fn classification_metrics(
    preds: &[usize],
    labels: &[usize],
    num_classes: usize,
    scores: Option<ArrayView2<'_, f64>>,
) -> Result<ClassificationMetrics> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::data(format!(
            "predictions ({}) and labels ({}) must be non-empty and equal length",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = preds.iter().chain(labels).find(|&&c| c >= num_classes) {
        return Err(Error::data(format!("class {bad} out of range for {num_classes} classes")));
    }
    if let Some(s) = &scores {
        if s.dim() != (labels.len(), num_classes) {
            return Err(Error::data(format!("scores {:?} do not match ({}, {num_classes})", s.dim(), labels.len())));
        }
    }
    let n = labels.len();
    let acc = preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / n as f64;
    let mut per_class = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let tp = preds.iter().zip(labels).filter(|&(&p, &l)| p == k && l == k).count() as f64;
        let pred_pos = preds.iter().filter(|&&p| p == k).count() as f64;
        let support = labels.iter().filter(|&&l| l == k).count();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let precision = ratio(tp, pred_pos);
        let recall = ratio(tp, support as f64);
        let f1 = ratio(2.0 * tp, pred_pos + support as f64);
        let ap = scores.as_ref().and_then(|s| {
            let col: Vec<f64> = s.column(k).to_vec();
            let rel: Vec<bool> = labels.iter().map(|&l| l == k).collect();
            average_precision(&col, &rel)
        });
        per_class.push(ClassStats { class: k, support, precision, recall, f1, ap });
    }
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / num_classes as f64;
    let map = scores.as_ref().map(|_| {
        let aps: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
        aps.iter().sum::<f64>() / aps.len().max(1) as f64
    });
    Ok(ClassificationMetrics { acc, macro_f1, map, per_class })
}

/// Non-interpolated AP: mean of precision@k over the ranks of positives,
/// ranking by descending score (stable, so earlier items win ties).
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let positives = relevant.iter().filter(|&&r| r).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevant[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

pub fn regression_metrics(preds: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<RegressionMetrics> {
    if preds.dim() != targets.dim() || preds.is_empty() {
        return Err(Error::data(format!(
            "prediction shape {:?} does not match target shape {:?}",
            preds.dim(),
            targets.dim()
        )));
    }
    let n = preds.len() as f64;
    let diff = &preds - &targets;
    Ok(RegressionMetrics {
        mse: diff.iter().map(|v| v * v).sum::<f64>() / n,
        mae: diff.iter().map(|v| v.abs()).sum::<f64>() / n,
    })
}
