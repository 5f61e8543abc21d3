//! Specificity-anchored risk groups and error analysis.

use serde::Serialize;

use super::roc::auroc;
use super::{check_inputs, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskGroup {
    Low,
    Moderate,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskGroups {
    pub t70: f64,
    pub t90: f64,
    pub groups: Vec<RiskGroup>,
}

impl RiskGroups {
    pub fn assign(&self, score: f64) -> RiskGroup {
        if score >= self.t90 {
            RiskGroup::High
        } else if score >= self.t70 {
            RiskGroup::Moderate
        } else {
            RiskGroup::Low
        }
    }
}

/// Smallest candidate `t` (a distinct score or +∞) with
/// `#{negatives < t} / #negatives ≥ target`.
pub fn specificity_threshold(scores: &[f64], labels: &[bool], target: f64) -> f64 {
    let mut neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    neg.sort_by(f64::total_cmp);
    let mut cands: Vec<f64> = scores.to_vec();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    cands.push(f64::INFINITY);
    let n = neg.len() as f64;
    for t in cands {
        let below = neg.partition_point(|&s| s < t);
        if below as f64 >= target * n {
            return t;
        }
    }
    f64::INFINITY
}

/// Thresholds at 70% and 90% specificity and the group of every exam:
/// low below t70, moderate in [t70, t90), high at or above t90.
pub fn risk_groups(scores: &[f64], labels: &[bool]) -> Result<RiskGroups, EvalError> {
    check_inputs(scores, labels)?;
    let t70 = specificity_threshold(scores, labels, 0.70);
    let t90 = specificity_threshold(scores, labels, 0.90);
    let mut rg = RiskGroups {
        t70,
        t90,
        groups: Vec::new(),
    };
    rg.groups = scores.iter().map(|&s| rg.assign(s)).collect();
    Ok(rg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "TN")]
    TrueNegative,
    #[serde(rename = "FN")]
    FalseNegative,
}

/// Days-to-diagnosis bins for positives, inclusive bounds.
pub const DAYS_BINS: [(i64, i64); 3] = [(0, 730), (731, 1461), (1462, 1826)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinAuroc {
    pub lo_days: i64,
    pub hi_days: i64,
    pub n_pos: usize,
    /// `None` when the bin has no positives.
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorGroups {
    pub threshold: f64,
    pub outcomes: Vec<Outcome>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub bins: Vec<BinAuroc>,
}

/// Confusion partition at `threshold` (positive iff score ≥ threshold) plus
/// AUROC of each days-to-diagnosis bin of positives against all negatives.
pub fn error_groups(
    scores: &[f64],
    labels: &[bool],
    days_to_endpoint: &[Option<i64>],
    threshold: f64,
) -> Result<ErrorGroups, EvalError> {
    check_inputs(scores, labels)?;
    if days_to_endpoint.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: days_to_endpoint.len(),
        });
    }
    let outcomes: Vec<Outcome> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| match (s >= threshold, l) {
            (true, true) => Outcome::TruePositive,
            (true, false) => Outcome::FalsePositive,
            (false, false) => Outcome::TrueNegative,
            (false, true) => Outcome::FalseNegative,
        })
        .collect();
    let count = |o: Outcome| outcomes.iter().filter(|&&x| x == o).count();
    let mut bins = Vec::new();
    for (lo, hi) in DAYS_BINS {
        let mut s = Vec::new();
        let mut l = Vec::new();
        let mut n_pos = 0;
        for i in 0..scores.len() {
            let in_bin = labels[i] && days_to_endpoint[i].is_some_and(|d| d >= lo && d <= hi);
            if in_bin || !labels[i] {
                s.push(scores[i]);
                l.push(labels[i]);
                n_pos += usize::from(in_bin);
            }
        }
        bins.push(BinAuroc {
            lo_days: lo,
            hi_days: hi,
            n_pos,
            auroc: auroc(&s, &l).ok(),
        });
    }
    Ok(ErrorGroups {
        threshold,
        tp: count(Outcome::TruePositive),
        fp: count(Outcome::FalsePositive),
        tn: count(Outcome::TrueNegative),
        fn_: count(Outcome::FalseNegative),
        outcomes,
        bins,
    })
}
