//! The two-stage network: a per-window encoder with its own classifier, and a
//! transformer head over the ordered sequence of window embeddings.

pub mod config;
pub mod encoder;
pub mod gradcheck;
pub mod head;
pub mod loss;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{CheckpointData, CheckpointError, Grads, ParamStore};
use crate::scalar::Scalar;

pub use config::ModelConfig;
pub use encoder::{Encoder, EncoderCache, WindowOutput};
pub use head::{HeadCache, SequentialHead};
pub use loss::{pos_weight, weighted_bce};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("every sequence position is masked")]
    AllMasked,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

const CONFIG_PREFIX: &str = "config.";

#[derive(Debug, Clone)]
pub struct DeepHhf<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub encoder: Encoder,
    pub head: SequentialHead,
}

pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with(Encoder::PREFIX)
}

pub fn is_head_param(name: &str) -> bool {
    name.starts_with(SequentialHead::PREFIX)
}

impl<T: Scalar> DeepHhf<T> {
    /// Builds a freshly initialised model; all weights are drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&mut params, &config, &mut rng);
        let head = SequentialHead::new(&mut params, &config, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            head,
        })
    }

    pub fn cast<U: Scalar>(&self) -> DeepHhf<U> {
        DeepHhf {
            config: self.config.clone(),
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            head: self.head.clone(),
        }
    }

    /// Gradient buffers for every parameter (step 1 also updates only the encoder,
    /// but head buffers are harmless there and useful for gradient checks).
    pub fn grads_all(&self) -> Grads<T> {
        Grads::all(&self.params)
    }

    pub fn grads_encoder(&self) -> Grads<T> {
        Grads::new(&self.params, is_encoder_param)
    }

    /// Gradient buffers for the head only; encoder slots are absent.
    pub fn grads_head(&self) -> Grads<T> {
        Grads::new(&self.params, is_head_param)
    }

    /// Runs `n` windows stored row-major in `windows` (`n × window_len`).
    /// Returns `n × feat_dim` embeddings and `n` logits.
    pub fn encoder_forward(
        &self,
        windows: &[T],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<T>, Vec<T>), ModelError> {
        let w = self.config.window_len;
        if windows.len() % w != 0 {
            return Err(ModelError::ShapeMismatch {
                expected: vec![windows.len() / w, w],
                found: vec![windows.len()],
            });
        }
        let n = windows.len() / w;
        let mut feats = Vec::with_capacity(n * self.config.feat_dim);
        let mut logits = Vec::with_capacity(n);
        for row in windows.chunks_exact(w) {
            let (out, _) = self.encoder.forward(&self.params, row, rng.as_deref_mut());
            feats.extend_from_slice(&out.features);
            logits.push(out.logit);
        }
        Ok((feats, logits))
    }

    /// Embeddings of a sequence of windows in eval mode; windows flagged invalid
    /// are skipped and left as zeros.
    pub fn embed_sequence(&self, windows: &[T], valid: &[bool]) -> Vec<T> {
        let w = self.config.window_len;
        let f = self.config.feat_dim;
        let mut feats = vec![T::zero(); valid.len() * f];
        for (i, row) in windows.chunks_exact(w).enumerate() {
            if valid[i] {
                let out = self.encoder.infer(&self.params, row);
                feats[i * f..(i + 1) * f].copy_from_slice(&out.features);
            }
        }
        feats
    }

    pub fn head_forward(
        &self,
        features: &[T],
        valid: &[bool],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(T, HeadCache<T>), ModelError> {
        self.head.forward(&self.params, features, valid, rng)
    }

    pub fn checkpoint(&self, mut meta: BTreeMap<String, String>) -> CheckpointData {
        for (k, v) in self.config.to_kv() {
            meta.insert(format!("{CONFIG_PREFIX}{k}"), v);
        }
        CheckpointData::from_store(meta, &self.params)
    }

    pub fn save(&self, path: &Path, meta: BTreeMap<String, String>) -> Result<(), ModelError> {
        Ok(self.checkpoint(meta).save(path)?)
    }

    /// Config stored in a checkpoint's metadata.
    pub fn config_of(ck: &CheckpointData) -> Result<ModelConfig, ModelError> {
        let kv: Vec<(&str, &str)> = ck
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(CONFIG_PREFIX).map(|k| (k, v.as_str())))
            .collect();
        if kv.is_empty() {
            return Err(ModelError::IncompatibleCheckpoint("no model config recorded".into()));
        }
        let mut cfg = ModelConfig::default();
        cfg.apply_kv(kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_checkpoint(ck: &CheckpointData) -> Result<Self, ModelError> {
        let mut m = Self::new(Self::config_of(ck)?, 0)?;
        ck.load_into(&mut m.params)?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, String>), ModelError> {
        let ck = CheckpointData::load(path)?;
        let m = Self::from_checkpoint(&ck)?;
        Ok((m, ck.meta))
    }

    /// Copies encoder weights from `ck`, which must share this model's encoder shape.
    pub fn load_encoder(&mut self, ck: &CheckpointData) -> Result<(), ModelError> {
        ck.load_matching(&mut self.params, is_encoder_param).map_err(|e| match e {
            CheckpointError::MissingParam(_) | CheckpointError::ShapeMismatch { .. } => {
                ModelError::IncompatibleCheckpoint(e.to_string())
            }
            other => ModelError::Checkpoint(other),
        })
    }
}
