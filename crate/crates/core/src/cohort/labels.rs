//! Endpoint extraction, exam labeling and patient-stratified splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emr::{EmrEvent, EventKind};
use super::icd9::PatternSet;
use super::CohortError;

/// Five years, allowing for one leap day. The boundary itself counts as HF.
pub const HF_WINDOW_DAYS: i64 = 1826;
pub const FIRST_EXAM_YEAR: i32 = 2010;
pub const LAST_EXAM_YEAR: i32 = 2023;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exam {
    pub exam_id: String,
    pub patient_id: String,
    pub exam_date: NaiveDate,
}

impl Exam {
    pub fn new(exam_id: &str, patient_id: &str, exam_date: NaiveDate) -> Self {
        Self {
            exam_id: exam_id.to_string(),
            patient_id: patient_id.to_string(),
            exam_date,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HF")]
    Hf,
    #[serde(rename = "non-HF")]
    NonHf,
}

impl Label {
    pub fn is_hf(self) -> bool {
        self == Label::Hf
    }

    /// 1.0 for HF, 0.0 otherwise.
    pub fn target(self) -> f64 {
        if self.is_hf() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamLabel {
    pub exam_id: String,
    pub patient_id: String,
    pub exam_date: NaiveDate,
    pub label: Label,
    pub endpoint_date: Option<NaiveDate>,
    pub days_to_endpoint: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exclusion {
    HfBeforeExam,
    OutsideStudyPeriod,
}

/// Earliest diagnosis matching the HF code set.
pub fn extract_endpoint(timeline: &[EmrEvent]) -> Option<NaiveDate> {
    let hf = PatternSet::hf();
    timeline
        .iter()
        .filter(|e| e.kind == EventKind::Diagnosis && hf.matches_str(&e.code))
        .map(|e| e.date)
        .min()
}

/// Labels exams against per-patient endpoints and reports the excluded ones.
pub fn label_exams_detailed(
    exams: &[Exam],
    endpoints: &BTreeMap<String, NaiveDate>,
) -> (Vec<ExamLabel>, Vec<(String, Exclusion)>) {
    let mut labels = Vec::with_capacity(exams.len());
    let mut excluded = Vec::new();
    for exam in exams {
        let year = exam.exam_date.year();
        if !(FIRST_EXAM_YEAR..=LAST_EXAM_YEAR).contains(&year) {
            excluded.push((exam.exam_id.clone(), Exclusion::OutsideStudyPeriod));
            continue;
        }
        let endpoint = endpoints.get(&exam.patient_id).copied();
        let delta = endpoint.map(|d| (d - exam.exam_date).num_days());
        if delta.is_some_and(|d| d < 0) {
            excluded.push((exam.exam_id.clone(), Exclusion::HfBeforeExam));
            continue;
        }
        let hf = delta.is_some_and(|d| d <= HF_WINDOW_DAYS);
        labels.push(ExamLabel {
            exam_id: exam.exam_id.clone(),
            patient_id: exam.patient_id.clone(),
            exam_date: exam.exam_date,
            label: if hf { Label::Hf } else { Label::NonHf },
            endpoint_date: endpoint,
            days_to_endpoint: if hf { delta } else { None },
            split: None,
        });
    }
    (labels, excluded)
}

pub fn label_exams(exams: &[Exam], endpoints: &BTreeMap<String, NaiveDate>) -> Vec<ExamLabel> {
    label_exams_detailed(exams, endpoints).0
}

fn in_test_period(d: NaiveDate) -> bool {
    d.year() == 2018 && d.month() <= 4
}

/// Assigns every exam a split: Jan–Apr 2018 exams and all other exams of their
/// patients go to test; a `val_frac` share of the remaining exams is sampled and
/// closed over patients for validation; the rest is train.
pub fn split_cohort(labels: &[ExamLabel], val_frac: f64, seed: u64) -> Result<Vec<ExamLabel>, CohortError> {
    if !(0.0..1.0).contains(&val_frac) {
        return Err(CohortError::DegenerateSplit(format!("val_frac {val_frac} outside [0, 1)")));
    }
    let test_patients: BTreeSet<&str> = labels
        .iter()
        .filter(|l| in_test_period(l.exam_date))
        .map(|l| l.patient_id.as_str())
        .collect();
    let mut remaining: Vec<&ExamLabel> = labels
        .iter()
        .filter(|l| !test_patients.contains(l.patient_id.as_str()))
        .collect();
    remaining.sort_by(|a, b| a.exam_id.cmp(&b.exam_id));

    let mut val_patients = BTreeSet::new();
    if val_frac > 0.0 && !remaining.is_empty() {
        let n_val = ((val_frac * remaining.len() as f64).round() as usize).clamp(1, remaining.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in sample(&mut rng, remaining.len(), n_val) {
            val_patients.insert(remaining[i].patient_id.as_str());
        }
    }

    let out: Vec<ExamLabel> = labels
        .iter()
        .map(|l| {
            let pid = l.patient_id.as_str();
            let split = if test_patients.contains(pid) {
                Split::Test
            } else if val_patients.contains(pid) {
                Split::Validation
            } else {
                Split::Train
            };
            ExamLabel {
                split: Some(split),
                ..l.clone()
            }
        })
        .collect();

    let count = |s: Split| out.iter().filter(|l| l.split == Some(s)).count();
    for (s, name) in [(Split::Train, "train"), (Split::Test, "test")] {
        if count(s) == 0 {
            return Err(CohortError::DegenerateSplit(format!("{name} split is empty")));
        }
    }
    if val_frac > 0.0 && count(Split::Validation) == 0 {
        return Err(CohortError::DegenerateSplit("validation split is empty".into()));
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[ExamLabel]) -> Result<(), CohortError> {
    let f = fs::File::create(path).map_err(|e| CohortError::io(path, e))?;
    let mut w = BufWriter::new(f);
    for l in labels {
        let line = serde_json::to_string(l).expect("labels serialize");
        writeln!(w, "{line}").map_err(|e| CohortError::io(path, e))?;
    }
    w.flush().map_err(|e| CohortError::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<ExamLabel>, CohortError> {
    let f = fs::File::open(path).map_err(|e| CohortError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CohortError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CohortError::BadLabelLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}
