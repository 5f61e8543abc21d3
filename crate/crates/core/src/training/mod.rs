//! Two-step training with early stopping on validation AUROC, and scoring.

pub mod config;
pub mod fit;
pub mod score;
pub mod source;

use thiserror::Error;

use crate::cohort::Split;
use crate::eval::EvalError;
use crate::model::ModelError;
use crate::sampling::SamplingError;
use crate::signal::SignalError;

pub use config::{Aggregation, RunConfig, TrainConfig};
pub use fit::{read_metrics, train_head, train_step1, train_step2, write_metrics, EpochMetrics, TrainOutcome};
pub use score::{encoder_logits, encoder_score, score_recording, sequence_features};
pub use source::{par_map, DirSource, RecordingSource};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("the {0} split holds a single class")]
    SingleClass(&'static str),
    #[error("exam {exam_id} passed as {expected:?} but labeled for another split")]
    SplitLeak { exam_id: String, expected: Split },
    #[error("no recording for exam {0}")]
    MissingRecording(String),
    #[error("non-finite weights after epoch {0}")]
    Diverged(usize),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
