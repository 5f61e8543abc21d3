//! Evaluation statistics: discrimination, risk groups and survival.

pub mod risk;
pub mod roc;
pub mod scores;
pub mod survival;

use thiserror::Error;

pub use risk::{error_groups, risk_groups, ErrorGroups, Outcome, RiskGroup, RiskGroups, DAYS_BINS};
pub use roc::{auroc, bootstrap_auroc, compare_models, pr_curve, roc_curve, Bootstrap, PrCurve, RocPoint};
pub use scores::{read_scores, write_scores, ScoreRow, ScoredCohort, ScoredExam};
pub use survival::{
    events_by, incidence_and_nns, kaplan_meier, logrank, odds_ratio, KmStep, Logrank, OddsRatio, Rate, SurvivalRow,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both classes are required, got {n_pos} positive and {n_neg} negative")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("total exposure is zero person-years")]
    ZeroExposure,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("no score for exam {0}")]
    MissingScore(String),
}

pub(crate) fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(s));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass { n_pos, n_neg });
    }
    Ok((n_pos, n_neg))
}
