//! Gradient-weighted attention rollout over the sequential head, time-of-day
//! attention density, and clustering of beats from high-attention windows.

mod beats;
mod cluster;
mod density;
mod rollout;

pub use beats::{beats_from_segment, extract_beats, high_attention_positions, BeatMatrix, BeatSource, BEAT_HALF, BEAT_LEN, SEGMENT_SAMPLES};
pub use cluster::{cluster_beats, kmeans, silhouette, BeatClusterResult, ClusterConfig, ClusterSummary, KMeans};
pub use density::{circadian_density, CircadianDensity, CoverageInterval};
pub use rollout::{
    grad_attention_rollout, layer_mass, rollout, write_profile, AttentionProfile, DiscardOrder, RolloutConfig,
};

use thiserror::Error;

use crate::model::ModelError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("the head produced no attention maps")]
    NoAttentionCaptured,
    #[error("no beats found in the selected segments")]
    NoBeatsFound,
    #[error("{found} beats, at least {needed} needed for clustering")]
    TooFewBeats { found: usize, needed: usize },
    #[error("beats are indistinguishable; no k in range gives a defined silhouette")]
    DegenerateClusters,
    #[error("discard ratio {0} outside [0, 1)")]
    BadDiscardRatio(f64),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

impl ExplainError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}
