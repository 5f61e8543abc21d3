use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelConfig;

/// How window logits become one recording score during step-1 validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    MeanLogit,
    MeanProb,
    Max,
}

impl Aggregation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean_logit" => Some(Self::MeanLogit),
            "mean_prob" => Some(Self::MeanProb),
            "max" => Some(Self::Max),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MeanLogit => "mean_logit",
            Self::MeanProb => "mean_prob",
            Self::Max => "max",
        }
    }

    pub fn apply(self, logits: &[f64]) -> f64 {
        let n = logits.len() as f64;
        match self {
            Self::MeanLogit => logits.iter().sum::<f64>() / n,
            Self::MeanProb => logits.iter().map(|&z| crate::nn::act::sigmoid(z)).sum::<f64>() / n,
            Self::Max => logits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// An aggregated score read as a probability.
    pub fn probability(self, score: f64) -> f64 {
        match self {
            Self::MeanProb => score,
            _ => crate::nn::act::sigmoid(score),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub step: u8,
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: Option<usize>,
    pub seed: u64,
    pub aggregation: Aggregation,
    /// Worker threads for feature extraction and validation scoring.
    pub threads: usize,
}

impl TrainConfig {
    pub fn step1() -> Self {
        Self {
            step: 1,
            lr: 1e-3,
            batch_size: 32,
            patience: 8,
            max_epochs: None,
            seed: 0,
            aggregation: Aggregation::MeanLogit,
            threads: 1,
        }
    }

    pub fn step2() -> Self {
        Self {
            step: 2,
            lr: 5e-5,
            ..Self::step1()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::BadConfig(m));
        if !(1..=2).contains(&self.step) {
            return bad(format!("step must be 1 or 2, got {}", self.step));
        }
        // lr = 0 is allowed: it freezes the weights, which early-stopping checks rely on.
        if !self.lr.is_finite() || self.lr < 0.0 {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.max_epochs == Some(0) {
            return bad("max_epochs must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("lr".into(), self.lr.to_string());
        m.insert("batch_size".into(), self.batch_size.to_string());
        m.insert("patience".into(), self.patience.to_string());
        if let Some(e) = self.max_epochs {
            m.insert("max_epochs".into(), e.to_string());
        }
        m.insert("seed".into(), self.seed.to_string());
        m.insert("aggregation".into(), self.aggregation.name().into());
        m
    }

    /// Applies one `key = value` pair; returns `false` for unknown keys.
    pub fn apply(&mut self, k: &str, v: &str) -> Result<bool, TrainError> {
        fn num<N: std::str::FromStr>(k: &str, v: &str) -> Result<N, TrainError> {
            v.parse()
                .map_err(|_| TrainError::BadConfig(format!("{k}: cannot parse {v:?}")))
        }
        match k {
            "lr" => self.lr = num(k, v)?,
            "batch_size" => self.batch_size = num(k, v)?,
            "patience" => self.patience = num(k, v)?,
            "max_epochs" => self.max_epochs = if v == "none" { None } else { Some(num(k, v)?) },
            "seed" => self.seed = num(k, v)?,
            "threads" => self.threads = num(k, v)?,
            "aggregation" => {
                self.aggregation = Aggregation::parse(v)
                    .ok_or_else(|| TrainError::BadConfig(format!("unknown aggregation {v:?}")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Model plus both training steps, as read from a key/value file:
///
/// ```text
/// # comment
/// model.enc_filters = 6
/// step1.lr = 0.001
/// step2.patience = 4
/// seed = 7            # applies to both steps
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub step1: TrainConfig,
    pub step2: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            step1: TrainConfig::step1(),
            step2: TrainConfig::step2(),
        }
    }
}

impl RunConfig {
    /// Sized for a single CPU core: the small model, capped epochs and shorter
    /// patience, and step-2 learning settings suited to a few dozen recordings.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig::desk(),
            step1: TrainConfig {
                max_epochs: Some(6),
                patience: 3,
                ..TrainConfig::step1()
            },
            step2: TrainConfig {
                lr: 3e-3,
                batch_size: 8,
                max_epochs: Some(12),
                patience: 4,
                ..TrainConfig::step2()
            },
        }
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), TrainError> {
        let mut model_kv = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::BadConfig(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let known = if let Some(k) = k.strip_prefix("model.") {
                model_kv.push((k.to_string(), v.to_string()));
                true
            } else if let Some(k) = k.strip_prefix("step1.") {
                self.step1.apply(k, v)?
            } else if let Some(k) = k.strip_prefix("step2.") {
                self.step2.apply(k, v)?
            } else {
                let a = self.step1.apply(k, v)?;
                let b = self.step2.apply(k, v)?;
                a && b
            };
            if !known {
                return Err(TrainError::BadConfig(format!("line {}: unknown key {k:?}", i + 1)));
            }
        }
        let unknown = self
            .model
            .apply_kv(model_kv.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        if let Some(k) = unknown.first() {
            return Err(TrainError::BadConfig(format!("unknown model key {k:?}")));
        }
        self.validate()
    }

    pub fn load(path: &Path, base: Self) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg = base;
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        self.step1.validate()?;
        self.step2.validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.model.to_kv() {
            s.push_str(&format!("model.{k} = {v}\n"));
        }
        for (prefix, t) in [("step1", &self.step1), ("step2", &self.step2)] {
            for (k, v) in t.to_kv() {
                s.push_str(&format!("{prefix}.{k} = {v}\n"));
            }
        }
        s
    }
}
