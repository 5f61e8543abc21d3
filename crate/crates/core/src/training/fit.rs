//! The two training loops and their shared early-stopping bookkeeping.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::score::{encoder_score, head_logit, sequence_features};
use super::source::{par_map, RecordingSource};
use super::TrainError;
use crate::cohort::{ExamLabel, Split};
use crate::eval::auroc;
use crate::model::loss::{bce_term, bce_term_grad};
use crate::model::{pos_weight, DeepHhf};
use crate::nn::act::sigmoid;
use crate::nn::{Adam, CheckpointData, ParamStore};
use crate::sampling::{derive_seed, gather, plan_step1, plan_step2};
use crate::scalar::Scalar;

/// Validation AUROC must beat the best so far by more than this. An epoch
/// that ties the best AUROC counts as an improvement when its validation
/// loss is lower by more than this.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
    pub is_best: bool,
    /// Unweighted BCE of the validation recording probabilities.
    pub val_loss: f64,
}

pub fn write_metrics(path: &Path, log: &[EpochMetrics]) -> Result<(), TrainError> {
    let err = |e: csv::Error| TrainError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for m in log {
        w.serialize(m).map_err(err)?;
    }
    w.flush().map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>, TrainError> {
    let err = |e: csv::Error| TrainError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|m| m.map_err(err)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Model restored to its best validation epoch.
    pub model: DeepHhf<T>,
    pub log: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_auroc: f64,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn checkpoint(&self, stage: &str) -> CheckpointData {
        let mut meta = BTreeMap::new();
        meta.insert("stage".to_string(), stage.to_string());
        meta.insert("best_epoch".to_string(), self.best_epoch.to_string());
        meta.insert("best_val_auroc".to_string(), format!("{:.6}", self.best_auroc));
        self.model.checkpoint(meta)
    }
}

struct EarlyStop<T> {
    patience: usize,
    best: f64,
    best_loss: f64,
    best_epoch: usize,
    since_best: usize,
    best_params: Option<ParamStore<T>>,
}

impl<T: Clone> EarlyStop<T> {
    fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
            best_params: None,
        }
    }

    fn observe(&mut self, epoch: usize, auroc: f64, loss: f64, params: &ParamStore<T>) -> bool {
        let better = auroc > self.best + MIN_IMPROVEMENT
            || (auroc >= self.best - MIN_IMPROVEMENT && loss < self.best_loss - MIN_IMPROVEMENT);
        if better {
            self.best = self.best.max(auroc);
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            self.best_params = Some(params.clone());
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    fn exhausted(&self) -> bool {
        self.since_best >= self.patience
    }
}

fn check_splits(train: &[&ExamLabel], val: &[&ExamLabel]) -> Result<Vec<f64>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    for (set, want) in [(train, Split::Train), (val, Split::Validation)] {
        if let Some(l) = set.iter().find(|l| l.split.is_some_and(|s| s != want)) {
            return Err(TrainError::SplitLeak {
                exam_id: l.exam_id.clone(),
                expected: want,
            });
        }
    }
    Ok(train.iter().map(|l| l.label.target()).collect())
}

fn finish<T: Scalar>(mut model: DeepHhf<T>, stop: EarlyStop<T>, log: Vec<EpochMetrics>) -> TrainOutcome<T> {
    if let Some(p) = stop.best_params {
        model.params = p;
    }
    TrainOutcome {
        model,
        log,
        best_epoch: stop.best_epoch,
        best_auroc: stop.best,
    }
}

/// Validation AUROC and unweighted BCE given recording scores and a map to probabilities.
fn validate(scores: &[f64], val: &[&ExamLabel], prob: impl Fn(f64) -> f64) -> Result<(f64, f64), TrainError> {
    let labels: Vec<bool> = val.iter().map(|l| l.label.is_hf()).collect();
    let a = auroc(scores, &labels)?;
    let loss = scores
        .iter()
        .zip(&labels)
        .map(|(&s, &y)| {
            let p = prob(s).clamp(1e-12, 1.0 - 1e-12);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / labels.len() as f64;
    Ok((a, loss))
}

/// Step 1: the encoder learns to classify single windows, each inheriting its
/// recording's label; windows are redrawn every epoch.
pub fn train_step1<T: Scalar, S: RecordingSource>(
    mut model: DeepHhf<T>,
    train: &[&ExamLabel],
    val: &[&ExamLabel],
    source: &S,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let targets = check_splits(train, val)?;
    let pw = pos_weight(&targets).ok_or(TrainError::SingleClass("train"))?;
    let mut grads = model.grads_encoder();
    let mut adam = Adam::new(cfg.lr, &grads);
    let mut stop = EarlyStop::new(cfg.patience);
    let mut log = Vec::new();
    let w = model.config.window_len;

    for epoch in 0.. {
        let mut windows: Vec<T> = Vec::new();
        let mut labels: Vec<f64> = Vec::new();
        for (l, &y) in train.iter().zip(&targets) {
            let rec = source.recording(&l.exam_id)?;
            let plan = plan_step1(&l.exam_id, derive_seed(cfg.seed, &l.exam_id, epoch as u64));
            let batch = gather(&rec, &plan)?;
            for (i, &masked) in batch.masked.iter().enumerate() {
                if !masked {
                    windows.extend(batch.row(i).iter().map(|&v| T::of(v as f64)));
                    labels.push(y);
                }
            }
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "step1/shuffle", epoch as u64)));
        let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "step1/dropout", epoch as u64));

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.zero();
            let n = batch.len() as f64;
            for &i in batch {
                let (out, cache) = model.encoder.forward(&model.params, &windows[i * w..(i + 1) * w], Some(&mut drop_rng));
                let z = out.logit.f64();
                loss_sum += bce_term(z, labels[i], pw);
                let g = T::of(bce_term_grad(z, labels[i], pw) / n);
                model.encoder.backward(&model.params, &cache, g, None, &mut grads);
            }
            adam.step(&mut model.params, &grads);
        }
        drop(windows);
        if !model.params.all_finite() {
            return Err(TrainError::Diverged(epoch));
        }

        let scores = par_map(val, cfg.threads, |l| {
            source
                .recording(&l.exam_id)
                .and_then(|r| encoder_score(&model, &r, cfg.aggregation))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let (a, val_loss) = validate(&scores, val, |s| cfg.aggregation.probability(s))?;
        let is_best = stop.observe(epoch, a, val_loss, &model.params);
        log.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / labels.len().max(1) as f64,
            val_auroc: a,
            is_best,
            val_loss,
        });
        if stop.exhausted() || cfg.max_epochs.is_some_and(|m| epoch + 1 >= m) {
            break;
        }
    }
    Ok(finish(model, stop, log))
}

/// Step 2 from a saved encoder: builds a fresh head around the checkpoint's
/// encoder and trains it.
pub fn train_step2<T: Scalar, S: RecordingSource>(
    encoder: &CheckpointData,
    train: &[&ExamLabel],
    val: &[&ExamLabel],
    source: &S,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    let config = DeepHhf::<T>::config_of(encoder)?;
    let mut model = DeepHhf::<T>::new(config, cfg.seed)?;
    model.load_encoder(encoder)?;
    train_head(model, train, val, source, cfg)
}

/// Trains the sequential head on frozen encoder features. Each training
/// recording gets a fresh grid offset every epoch; validation uses `c = 0`.
pub fn train_head<T: Scalar, S: RecordingSource>(
    mut model: DeepHhf<T>,
    train: &[&ExamLabel],
    val: &[&ExamLabel],
    source: &S,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let targets = check_splits(train, val)?;
    let pw = pos_weight(&targets).ok_or(TrainError::SingleClass("train"))?;
    let mut grads = model.grads_head();
    let mut adam = Adam::new(cfg.lr, &grads);
    let mut stop = EarlyStop::new(cfg.patience);
    let mut log = Vec::new();

    let val_feats = par_map(val, cfg.threads, |l| {
        source
            .recording(&l.exam_id)
            .and_then(|r| sequence_features(&model, &r, 0))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    for epoch in 0.. {
        let feats = par_map(train, cfg.threads, |l| {
            let rec = source.recording(&l.exam_id)?;
            let plan = plan_step2(&l.exam_id, derive_seed(cfg.seed, &l.exam_id, epoch as u64));
            sequence_features(&model, &rec, plan.offsets[0])
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "step2/shuffle", epoch as u64)));
        let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "step2/dropout", epoch as u64));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.zero();
            let n = batch.len() as f64;
            for &i in batch {
                let (f, valid) = &feats[i];
                let (z, cache) = model.head_forward(f, valid, Some(&mut drop_rng))?;
                let z = z.f64();
                loss_sum += bce_term(z, targets[i], pw);
                let g = T::of(bce_term_grad(z, targets[i], pw) / n);
                model.head.backward(&model.params, &cache, g, &mut grads, false);
            }
            adam.step(&mut model.params, &grads);
        }
        if !model.params.all_finite() {
            return Err(TrainError::Diverged(epoch));
        }

        let scores = val_feats
            .iter()
            .map(|(f, v)| head_logit(&model, f, v))
            .collect::<Result<Vec<_>, _>>()?;
        let (a, val_loss) = validate(&scores, val, sigmoid)?;
        let is_best = stop.observe(epoch, a, val_loss, &model.params);
        log.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_auroc: a,
            is_best,
            val_loss,
        });
        if stop.exhausted() || cfg.max_epochs.is_some_and(|m| epoch + 1 >= m) {
            break;
        }
    }
    Ok(finish(model, stop, log))
}
