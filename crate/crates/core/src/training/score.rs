use std::borrow::Cow;

use super::config::Aggregation;
use super::TrainError;
use crate::model::DeepHhf;
use crate::nn::act::sigmoid;
use crate::sampling::{gather, plan_step2_at};
use crate::scalar::Scalar;
use crate::signal::{normalize_duration, EcgRecording, DAY_SAMPLES};

fn normalized(rec: &EcgRecording) -> Result<Cow<'_, EcgRecording>, TrainError> {
    if rec.len() == DAY_SAMPLES {
        Ok(Cow::Borrowed(rec))
    } else {
        Ok(Cow::Owned(normalize_duration(rec.clone())?))
    }
}

/// Windows of the step-2 grid at offset `c`, converted to `T`, with validity flags.
pub fn grid_windows<T: Scalar>(rec: &EcgRecording, c: usize) -> Result<(Vec<T>, Vec<bool>), TrainError> {
    let rec = normalized(rec)?;
    let batch = gather(&rec, &plan_step2_at(&rec.exam_id, c))?;
    let valid = batch.valid();
    Ok((batch.data.iter().map(|&v| T::of(v as f64)).collect(), valid))
}

/// Encoder embeddings of the step-2 grid at offset `c`.
pub fn sequence_features<T: Scalar>(
    model: &DeepHhf<T>,
    rec: &EcgRecording,
    c: usize,
) -> Result<(Vec<T>, Vec<bool>), TrainError> {
    let (windows, valid) = grid_windows::<T>(rec, c)?;
    Ok((model.embed_sequence(&windows, &valid), valid))
}

/// Window logits of the encoder over the valid windows of the canonical grid.
pub fn encoder_logits<T: Scalar>(model: &DeepHhf<T>, rec: &EcgRecording) -> Result<Vec<f64>, TrainError> {
    let (windows, valid) = grid_windows::<T>(rec, 0)?;
    let w = model.config.window_len;
    Ok(windows
        .chunks_exact(w)
        .zip(&valid)
        .filter(|(_, &v)| v)
        .map(|(row, _)| model.encoder.infer(&model.params, row).logit.f64())
        .collect())
}

/// Recording-level encoder score; not a probability unless `agg` is `MeanProb`.
pub fn encoder_score<T: Scalar>(model: &DeepHhf<T>, rec: &EcgRecording, agg: Aggregation) -> Result<f64, TrainError> {
    Ok(agg.apply(&encoder_logits(model, rec)?))
}

/// Head logit for precomputed sequence features (eval mode).
pub fn head_logit<T: Scalar>(model: &DeepHhf<T>, feats: &[T], valid: &[bool]) -> Result<f64, TrainError> {
    Ok(model.head_forward(feats, valid, None)?.0.f64())
}

/// Probability of HF within five years: canonical grid (c = 0), encoder, head, sigmoid.
pub fn score_recording<T: Scalar>(model: &DeepHhf<T>, rec: &EcgRecording) -> Result<f64, TrainError> {
    let (feats, valid) = sequence_features(model, rec, 0)?;
    Ok(sigmoid(head_logit(model, &feats, &valid)?))
}
