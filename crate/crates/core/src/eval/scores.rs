//! Per-exam score files and their join with labels.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cohort::ExamLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub exam_id: String,
    pub score: f64,
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<(), EvalError> {
    let err = |e: csv::Error| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, EvalError> {
    let err = |e: csv::Error| EvalError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|row| row.map_err(err)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredExam {
    pub exam_id: String,
    pub patient_id: String,
    pub exam_date: NaiveDate,
    pub score: f64,
    pub label: bool,
    pub endpoint_date: Option<NaiveDate>,
    pub days_to_endpoint: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoredCohort {
    pub rows: Vec<ScoredExam>,
}

impl ScoredCohort {
    /// Joins labels with scores by exam id; every label must have a score.
    pub fn join(labels: &[&ExamLabel], scores: &[ScoreRow]) -> Result<Self, EvalError> {
        let by_id: BTreeMap<&str, f64> = scores.iter().map(|s| (s.exam_id.as_str(), s.score)).collect();
        let rows = labels
            .iter()
            .map(|l| {
                let score = *by_id
                    .get(l.exam_id.as_str())
                    .ok_or_else(|| EvalError::MissingScore(l.exam_id.clone()))?;
                if !score.is_finite() {
                    return Err(EvalError::NonFinite(score));
                }
                Ok(ScoredExam {
                    exam_id: l.exam_id.clone(),
                    patient_id: l.patient_id.clone(),
                    exam_date: l.exam_date,
                    score,
                    label: l.label.is_hf(),
                    endpoint_date: l.endpoint_date,
                    days_to_endpoint: l.days_to_endpoint,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rows })
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn days_to_endpoint(&self) -> Vec<Option<i64>> {
        self.rows.iter().map(|r| r.days_to_endpoint).collect()
    }
}
