//! Clinical baseline: QRS duration from the recording, the PCP-HF ten-year
//! risk equation over EMR covariates, and a logistic combiner of scores.

mod combiner;
mod inputs;
mod pcphf;
mod qrs;

pub use combiner::{fit_score_combiner, LogisticModel, GRAD_TOL, RIDGE};
pub use inputs::{assemble_pcphf_inputs, lookup_window, nearest_value, treated, ANTIHYPERTENSIVE_ATC, GLUCOSE_LOWERING_ATC};
pub use pcphf::{
    pcphf_score, CoefficientTable, PcphfInputs, SexCoefficients, Term, AGE_RANGE, KNOWN_TERMS,
    PLACEHOLDER_COEFFICIENTS, REQUIRED_TERMS,
};
pub use qrs::{delineate, measure_qrs, QRS_SLICE_LEN, QRS_SLICE_START};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClinicalError {
    #[error("recording has {hours:.1} h of valid signal, 12 h needed")]
    InsufficientValidData { hours: f64 },
    #[error("no beats detected in the QRS measurement slice")]
    NoBeatsDetected,
    #[error("missing: {}", .0.join(","))]
    MissingVariable(Vec<String>),
    #[error("{field} = {value} must be positive")]
    NonPositive { field: &'static str, value: f64 },
    #[error("coefficient table line {line}: {reason}")]
    BadCoefficients { line: usize, reason: String },
    #[error("coefficient table incomplete: {0}")]
    Incomplete(String),
    #[error("bad combiner input: {0}")]
    BadDesign(String),
    #[error("logistic fit did not converge")]
    NotConverged,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}
