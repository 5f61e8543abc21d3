use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::model::DeepHhf;
use crate::sampling::STEP2_SEGMENT;
use crate::scalar::Scalar;
use crate::signal::FS;
use crate::training::sequence_features;

/// Where the discard step sits relative to adding the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscardOrder {
    BeforeIdentity,
    AfterIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Share of the lowest entries of each layer's mass that is zeroed.
    pub discard_ratio: f64,
    pub order: DiscardOrder,
    /// Keep each position's relevance to its own pooled token. Off by
    /// default: it is the mean-pooling counterpart of a class token's own
    /// column, and the identity paths put a uniform floor under it.
    pub keep_self: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            discard_ratio: 0.9,
            order: DiscardOrder::BeforeIdentity,
            keep_self: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionProfile {
    pub exam_id: String,
    pub start_time: NaiveDateTime,
    /// One entry per step-2 position; sums to 1 over valid positions.
    pub mass: Vec<f64>,
    pub valid: Vec<bool>,
}

impl AttentionProfile {
    /// Wall-clock start of the window at `pos` on the canonical grid.
    pub fn wall_clock(&self, pos: usize) -> NaiveDateTime {
        self.start_time + Duration::seconds((pos * STEP2_SEGMENT / FS) as i64)
    }
}

/// `relu(grad ⊙ attention)` averaged over heads, restricted to valid rows
/// and columns. Both inputs are `heads × len × len`.
pub fn layer_mass(probs: &[f64], grads: &[f64], heads: usize, len: usize, valid: &[bool]) -> Vec<f64> {
    let mut m = vec![0.0; len * len];
    for h in 0..heads {
        let base = h * len * len;
        for i in (0..len).filter(|&i| valid[i]) {
            for j in (0..len).filter(|&j| valid[j]) {
                let k = base + i * len + j;
                m[i * len + j] += (probs[k] * grads[k]).max(0.0);
            }
        }
    }
    m.iter_mut().for_each(|v| *v /= heads as f64);
    m
}

/// Zeroes the lowest `ratio` share of the valid-block entries.
fn discard(m: &mut [f64], len: usize, valid: &[bool], ratio: f64) {
    let idx: Vec<usize> = (0..len)
        .filter(|&i| valid[i])
        .flat_map(|i| (0..len).filter(|&j| valid[j]).map(move |j| i * len + j))
        .collect();
    let n_drop = (ratio * idx.len() as f64).floor() as usize;
    if n_drop == 0 {
        return;
    }
    let mut vals: Vec<f64> = idx.iter().map(|&k| m[k]).collect();
    let (_, &mut cut, _) = vals.select_nth_unstable_by(n_drop - 1, f64::total_cmp);
    for &k in &idx {
        if m[k] <= cut {
            m[k] = 0.0;
        }
    }
}

fn row_normalize(m: &mut [f64], len: usize) {
    for row in m.chunks_exact_mut(len) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
}

/// Composes per-layer masses (`len × len`, first layer first) into a mass per
/// input position. Each layer becomes `rownorm(rownorm(discard(M)) + I)`, so
/// rescaling any layer leaves the result unchanged. With `R` the product of
/// the layers (last layer on the left), position `j` gets the sum of column
/// `j` of `R` over valid rows, without `R[j][j]` unless `keep_self` is set.
/// A profile with no mass off the diagonal falls back to keeping it.
pub fn rollout(layers: &[Vec<f64>], len: usize, valid: &[bool], cfg: &RolloutConfig) -> Result<Vec<f64>, ExplainError> {
    if !(0.0..1.0).contains(&cfg.discard_ratio) {
        return Err(ExplainError::BadDiscardRatio(cfg.discard_ratio));
    }
    if layers.is_empty() {
        return Err(ExplainError::NoAttentionCaptured);
    }
    let mut r = vec![0.0; len * len];
    for i in (0..len).filter(|&i| valid[i]) {
        r[i * len + i] = 1.0;
    }
    for m in layers {
        let mut a = m.clone();
        if cfg.order == DiscardOrder::BeforeIdentity {
            discard(&mut a, len, valid, cfg.discard_ratio);
        }
        row_normalize(&mut a, len);
        for i in (0..len).filter(|&i| valid[i]) {
            a[i * len + i] += 1.0;
        }
        if cfg.order == DiscardOrder::AfterIdentity {
            discard(&mut a, len, valid, cfg.discard_ratio);
        }
        row_normalize(&mut a, len);
        let mut next = vec![0.0; len * len];
        for (a_row, out) in a.chunks_exact(len).zip(next.chunks_exact_mut(len)) {
            for (k, &x) in a_row.iter().enumerate() {
                if x != 0.0 {
                    out.iter_mut().zip(&r[k * len..(k + 1) * len]).for_each(|(o, &v)| *o += x * v);
                }
            }
        }
        r = next;
    }
    let column = |keep_self: bool| -> Vec<f64> {
        (0..len)
            .map(|j| {
                if !valid[j] {
                    return 0.0;
                }
                let s: f64 = (0..len).filter(|&i| valid[i]).map(|i| r[i * len + j]).sum();
                if keep_self {
                    s
                } else {
                    (s - r[j * len + j]).max(0.0)
                }
            })
            .collect()
    };
    let mut v = column(cfg.keep_self);
    if v.iter().sum::<f64>() <= 0.0 {
        v = column(true);
    }
    let total: f64 = v.iter().sum();
    Ok(v.iter().map(|&x| if total > 0.0 { x / total } else { 0.0 }).collect())
}

/// Rollout profile of one recording: eval-mode forward on the canonical grid,
/// then the positive logit is back-propagated to every attention map.
pub fn grad_attention_rollout<T: Scalar>(
    model: &DeepHhf<T>,
    rec: &crate::signal::EcgRecording,
    cfg: &RolloutConfig,
) -> Result<AttentionProfile, ExplainError> {
    let (feats, valid) = sequence_features(model, rec, 0)?;
    let (_, cache) = model.head_forward(&feats, &valid, None)?;
    let mut grads = model.grads_head();
    let (_, attn_grads) = model.head.backward(&model.params, &cache, T::one(), &mut grads, true);
    let probs = cache.attention();
    if attn_grads.is_empty() || probs.len() != attn_grads.len() {
        return Err(ExplainError::NoAttentionCaptured);
    }
    let len = valid.len();
    let heads = model.config.n_heads;
    let layers: Vec<Vec<f64>> = probs
        .iter()
        .zip(&attn_grads)
        .map(|(p, g)| {
            let p: Vec<f64> = p.iter().map(|x| x.f64()).collect();
            let g: Vec<f64> = g.iter().map(|x| x.f64()).collect();
            layer_mass(&p, &g, heads, len, &valid)
        })
        .collect();
    Ok(AttentionProfile {
        exam_id: rec.exam_id.clone(),
        start_time: rec.start_time,
        mass: rollout(&layers, len, &valid, cfg)?,
        valid,
    })
}

#[derive(Serialize)]
struct ProfileRow {
    position: usize,
    wall_clock: NaiveDateTime,
    mass: f64,
}

/// `profile.csv`: position, wall_clock, mass.
pub fn write_profile(path: &Path, p: &AttentionProfile) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ExplainError::io(path, e))?;
    for (position, &mass) in p.mass.iter().enumerate() {
        w.serialize(ProfileRow {
            position,
            wall_clock: p.wall_clock(position),
            mass,
        })
        .map_err(|e| ExplainError::io(path, e))?;
    }
    w.flush().map_err(|e| ExplainError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(len: usize) -> Vec<f64> {
        vec![1.0 / len as f64; len * len]
    }

    #[test]
    fn uniform_attention_gives_uniform_profile() {
        let len = 6;
        let valid = vec![true; len];
        let grads = vec![0.3; len * len];
        let m = layer_mass(&uniform(len), &grads, 1, len, &valid);
        let p = rollout(&[m], len, &valid, &RolloutConfig::default()).unwrap();
        for &x in &p {
            assert!((x - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    fn eye(len: usize) -> Vec<f64> {
        let mut m = vec![0.0; len * len];
        for i in 0..len {
            m[i * len + i] = 1.0;
        }
        m
    }

    #[test]
    fn identity_layers_pass_first_layer_mass_through() {
        // Off-diagonal first-layer mass, one unit per row: columns 2 and 4
        // collect 3 and 1 units, column 0 one.
        let len = 5;
        let valid = vec![true; len];
        let mut first = vec![0.0; len * len];
        for (i, j) in [(0, 2), (1, 2), (2, 4), (3, 2), (4, 0)] {
            first[i * len + j] = 1.0;
        }
        let cfg = RolloutConfig {
            discard_ratio: 0.0,
            ..RolloutConfig::default()
        };
        let alone = rollout(&[first.clone()], len, &valid, &cfg).unwrap();
        let stacked = rollout(&[first, eye(len), eye(len)], len, &valid, &cfg).unwrap();
        let want = [0.2, 0.0, 0.6, 0.0, 0.2];
        for ((a, b), w) in alone.iter().zip(&stacked).zip(want) {
            assert!((a - w).abs() < 1e-12 && (b - w).abs() < 1e-12, "{alone:?} {stacked:?}");
        }
    }

    #[test]
    fn keep_self_adds_the_identity_floor() {
        let len = 5;
        let valid = vec![true; len];
        let mut first = vec![0.0; len * len];
        for i in 0..len {
            first[i * len + 2] = 1.0;
        }
        let cfg = RolloutConfig {
            discard_ratio: 0.0,
            keep_self: true,
            ..RolloutConfig::default()
        };
        // Half of every row moves to column 2, half stays put.
        let p = rollout(&[first.clone()], len, &valid, &cfg).unwrap();
        assert!((p[2] - 0.6).abs() < 1e-12 && (p[0] - 0.1).abs() < 1e-12);
        // Without self-relevance only the four rows pointing elsewhere count.
        let q = rollout(&[first], len, &valid, &RolloutConfig { keep_self: false, ..cfg }).unwrap();
        assert!((q[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_identity_falls_back_to_self_mass() {
        let len = 4;
        let valid = vec![true; len];
        let p = rollout(&[eye(len), eye(len)], len, &valid, &RolloutConfig::default()).unwrap();
        for &x in &p {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_positions_get_nothing() {
        let len = 4;
        let valid = vec![true, true, false, true];
        let m = layer_mass(&uniform(len), &vec![1.0; len * len], 1, len, &valid);
        let p = rollout(&[m], len, &valid, &RolloutConfig::default()).unwrap();
        assert_eq!(p[2], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_layers_and_bad_ratio() {
        assert!(matches!(
            rollout(&[], 2, &[true, true], &RolloutConfig::default()),
            Err(ExplainError::NoAttentionCaptured)
        ));
        let cfg = RolloutConfig {
            discard_ratio: 1.0,
            ..RolloutConfig::default()
        };
        assert!(matches!(
            rollout(&[vec![1.0; 4]], 2, &[true, true], &cfg),
            Err(ExplainError::BadDiscardRatio(_))
        ));
    }

    proptest! {
        #[test]
        fn profile_is_a_distribution_and_scale_free(
            vals in prop::collection::vec(0.0f64..1.0, 2 * 36),
            scale in 0.01f64..100.0,
            order_after in any::<bool>(),
            keep_self in any::<bool>(),
        ) {
            let len = 6;
            let valid = vec![true, true, true, false, true, true];
            let layers: Vec<Vec<f64>> = vals.chunks(36).map(|c| c.to_vec()).collect();
            let cfg = RolloutConfig {
                discard_ratio: 0.5,
                order: if order_after { DiscardOrder::AfterIdentity } else { DiscardOrder::BeforeIdentity },
                keep_self,
            };
            let p = rollout(&layers, len, &valid, &cfg).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert_eq!(p[3], 0.0);
            if !order_after {
                let scaled: Vec<Vec<f64>> = layers.iter().map(|l| l.iter().map(|x| x * scale).collect()).collect();
                let q = rollout(&scaled, len, &valid, &cfg).unwrap();
                for (a, b) in p.iter().zip(&q) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
