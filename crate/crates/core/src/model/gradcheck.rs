//! Central finite-difference verification of the hand-written backward passes.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{is_encoder_param, DeepHhf};
use crate::scalar::dot_f64;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// `|a − n| / max(|a|, |n|, floor)`; the floor keeps vanishing gradients
    /// from turning round-off into large ratios.
    pub fn rel_err(&self, floor: f64) -> f64 {
        let denom = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / denom
    }
}

/// Fixed random probe: a few windows and a short feature sequence with its last
/// position masked, plus projections that turn encoder outputs into a scalar.
pub struct Probe {
    pub windows: Vec<f64>,
    pub logit_w: Vec<f64>,
    pub feat_w: Vec<f64>,
    pub seq: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Probe {
    pub fn new(model: &DeepHhf<f64>, n_windows: usize, seq_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &model.config;
        let uv = Normal::new(0.0, 400.0).expect("sigma");
        let unit = Normal::new(0.0, 1.0).expect("sigma");
        let draw = |n: usize, d: &Normal<f64>, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| d.sample(rng)).collect()
        };
        let windows = draw(n_windows * cfg.window_len, &uv, &mut rng);
        let logit_w = draw(n_windows, &unit, &mut rng);
        let feat_w = draw(n_windows * cfg.feat_dim, &unit, &mut rng);
        let seq = draw(seq_len * cfg.feat_dim, &unit, &mut rng);
        let mut valid = vec![true; seq_len];
        if seq_len > 1 {
            valid[seq_len - 1] = false;
        }
        Self {
            windows,
            logit_w,
            feat_w,
            seq,
            valid,
        }
    }

    /// Scalar objective touching every encoder and head parameter.
    pub fn loss(&self, model: &DeepHhf<f64>) -> f64 {
        let (feats, logits) = model.encoder_forward(&self.windows, None).expect("shape");
        let (h, _) = model.head_forward(&self.seq, &self.valid, None).expect("unmasked");
        dot_f64(&logits, &self.logit_w) + dot_f64(&feats, &self.feat_w) + h
    }

    pub fn gradients(&self, model: &DeepHhf<f64>) -> crate::nn::Grads<f64> {
        let mut grads = model.grads_all();
        let w = model.config.window_len;
        let f = model.config.feat_dim;
        for (i, row) in self.windows.chunks_exact(w).enumerate() {
            let (_, cache) = model.encoder.forward(&model.params, row, None);
            model.encoder.backward(
                &model.params,
                &cache,
                self.logit_w[i],
                Some(&self.feat_w[i * f..(i + 1) * f]),
                &mut grads,
            );
        }
        let (_, cache) = model.head_forward(&self.seq, &self.valid, None).expect("unmasked");
        model.head.backward(&model.params, &cache, 1.0, &mut grads, false);
        grads
    }
}

/// Compares analytic and central-difference gradients on `n_encoder` random
/// encoder scalars and `n_head` random head scalars.
pub fn check_gradients(
    model: &DeepHhf<f64>,
    probe: &Probe,
    n_encoder: usize,
    n_head: usize,
    h: f64,
    seed: u64,
) -> Vec<GradCheck> {
    let grads = probe.gradients(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool_enc = Vec::new();
    let mut pool_head = Vec::new();
    for id in model.params.ids() {
        let p = model.params.param(id);
        for j in 0..p.len() {
            if is_encoder_param(&p.name) {
                pool_enc.push((id, j));
            } else {
                pool_head.push((id, j));
            }
        }
    }
    let mut picks = Vec::new();
    for (pool, n) in [(&pool_enc, n_encoder), (&pool_head, n_head)] {
        for i in sample(&mut rng, pool.len(), n.min(pool.len())) {
            picks.push(pool[i]);
        }
    }
    let mut work = model.clone();
    picks
        .into_iter()
        .map(|(id, j)| {
            let orig = work.params.get(id)[j];
            work.params.get_mut(id)[j] = orig + h;
            let up = probe.loss(&work);
            work.params.get_mut(id)[j] = orig - h;
            let down = probe.loss(&work);
            work.params.get_mut(id)[j] = orig;
            GradCheck {
                name: work.params.param(id).name.clone(),
                index: j,
                analytic: grads.get(id).expect("all trainable")[j],
                numeric: (up - down) / (2.0 * h),
            }
        })
        .collect()
}
