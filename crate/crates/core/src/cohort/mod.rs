//! Labeled exam cohorts built from EMR-style event tables.

pub mod emr;
pub mod icd9;
pub mod labels;
pub mod verify;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use emr::{Demographics, Emr, EmrEvent, EventKind, Sex, Source};
pub use icd9::{match_icd9, Icd9Code, Icd9Pattern, PatternSet, COMORBIDITIES, HF_PATTERNS};
pub use labels::{
    extract_endpoint, label_exams, label_exams_detailed, read_labels, split_cohort, write_labels, Exam,
    ExamLabel, Exclusion, Label, Split, HF_WINDOW_DAYS,
};
pub use verify::{
    comorbidity_flags, echo_category, medication_category, EchoCategory, MedCategory, MedicationReport,
    MEDICATION_GROUPS,
};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("bad ICD-9 pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("malformed ICD-9 code {0:?}")]
    BadCode(String),
    #[error("{path}: {reason}")]
    Csv { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    BadLabelLine { path: PathBuf, line: usize, reason: String },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
}

impl CohortError {
    pub(crate) fn csv(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
