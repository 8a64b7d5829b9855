use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::tensor::dot;

/// Scores at or above this value count as positive predictions.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::DimensionMismatch { a: u.len(), b: v.len() });
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    // sqrt(uu·vv) rather than ‖u‖‖v‖ so that cos(u, u) is exactly 1
    Ok((dot(u, v) / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassificationReport {
    /// Threshold metrics derived from confusion counts. Precision, recall
    /// and F1 are 0 when their denominators vanish.
    pub fn from_confusion(confusion: Confusion, auc: Option<f64>) -> Self {
        let Confusion { tp, fp, fn_, tn } = confusion;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        ClassificationReport { auc, accuracy: ratio(tp + tn, confusion.total()), f1, precision, recall, confusion }
    }
}

/// Mann–Whitney AUC: the probability that a random positive outscores a
/// random negative, with ties counted as one half. `None` unless both
/// classes are present.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<Option<f64>, MetricError> {
    if scores.len() != truth.len() {
        return Err(MetricError::LengthMismatch { a: scores.len(), b: truth.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore(i));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // 1-based mid-ranks; tied groups share their average rank
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid * order[i..=j].iter().filter(|&&k| truth[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = pos_rank_sum - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * n)))
}

/// AUC plus confusion-derived metrics at [`DECISION_THRESHOLD`].
pub fn classification_report(scores: &[f64], truth: &[bool]) -> Result<ClassificationReport, MetricError> {
    let auc = roc_auc(scores, truth)?;
    let mut c = Confusion::default();
    for (&s, &t) in scores.iter().zip(truth) {
        match (s >= DECISION_THRESHOLD, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(ClassificationReport::from_confusion(c, auc))
}
