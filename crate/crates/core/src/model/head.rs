//! Sequential head: input projection, fixed sinusoidal positions, post-norm
//! transformer encoder layers, masked mean pooling, and two FC layers.

use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::ModelError;
use crate::nn::act::{gelu_backward, gelu_vec};
use crate::nn::dropout::{dropout, dropout_backward};
use crate::nn::norm::LayerNormCache;
use crate::nn::{AttentionCache, Grads, LayerNorm, Linear, MultiHeadAttention, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
struct TransformerLayer {
    attn: MultiHeadAttention,
    ln1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    ln2: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct SequentialHead {
    input: Linear,
    layers: Vec<TransformerLayer>,
    fc1: Linear,
    fc2: Linear,
    d_model: usize,
    feat_dim: usize,
    dropout_p: f64,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    attn: AttentionCache<T>,
    m_attn: Option<Vec<T>>,
    ln1: LayerNormCache<T>,
    h1: Vec<T>,
    f1: Vec<T>,
    g: Vec<T>,
    m_ff: Option<Vec<T>>,
    ln2: LayerNormCache<T>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    len: usize,
    valid: Vec<bool>,
    features: Vec<T>,
    m_in: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    pooled: Vec<T>,
    p1: Vec<T>,
    q: Vec<T>,
    m_q: Option<Vec<T>>,
}

impl<T> HeadCache<T> {
    /// Post-softmax attention of each layer, `n_heads × len × len`.
    pub fn attention(&self) -> Vec<&[T]> {
        self.layers.iter().map(|l| l.attn.probs.as_slice()).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// Sinusoidal position table, `len × d`.
pub fn positional_encoding<T: Scalar>(len: usize, d: usize) -> Vec<T> {
    let mut pe = vec![T::zero(); len * d];
    for pos in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d as f64);
            pe[pos * d + i] = T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

impl SequentialHead {
    pub const PREFIX: &'static str = "head.";

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.d_model;
        let layers = (0..cfg.n_layers)
            .map(|i| TransformerLayer {
                attn: MultiHeadAttention::new(store, &format!("head.layer{i}.attn"), d, cfg.n_heads, rng),
                ln1: LayerNorm::new(store, &format!("head.layer{i}.ln1"), d),
                ff1: Linear::new(store, &format!("head.layer{i}.ff1"), d, cfg.ff_dim, rng),
                ff2: Linear::new(store, &format!("head.layer{i}.ff2"), cfg.ff_dim, d, rng),
                ln2: LayerNorm::new(store, &format!("head.layer{i}.ln2"), d),
            })
            .collect();
        Self {
            input: Linear::new(store, "head.input", cfg.feat_dim, d, rng),
            layers,
            fc1: Linear::new(store, "head.fc1", d, cfg.head_hidden, rng),
            fc2: Linear::new(store, "head.fc2", cfg.head_hidden, 1, rng),
            d_model: d,
            feat_dim: cfg.feat_dim,
            dropout_p: cfg.dropout_p,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// `features` is `len × feat_dim`; `valid[i] == false` marks padding positions.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        features: &[T],
        valid: &[bool],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(T, HeadCache<T>), ModelError> {
        let len = valid.len();
        if features.len() != len * self.feat_dim {
            return Err(ModelError::ShapeMismatch {
                expected: vec![len, self.feat_dim],
                found: vec![features.len() / self.feat_dim.max(1), self.feat_dim],
            });
        }
        let n_valid = valid.iter().filter(|&&v| v).count();
        if n_valid == 0 {
            return Err(ModelError::AllMasked);
        }
        let d = self.d_model;
        let mut h = self.input.forward(p, features, len);
        let pe: Vec<T> = positional_encoding(len, d);
        h.iter_mut().zip(&pe).for_each(|(a, &b)| *a += b);
        let m_in = dropout(&mut h, self.dropout_p, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (mut a, attn) = l.attn.forward(p, &h, len, valid);
            let m_attn = dropout(&mut a, self.dropout_p, rng.as_deref_mut());
            let s1: Vec<T> = h.iter().zip(&a).map(|(&x, &y)| x + y).collect();
            let (h1, ln1) = l.ln1.forward(p, &s1, len);
            let f1 = l.ff1.forward(p, &h1, len);
            let g = gelu_vec(&f1);
            let mut f2 = l.ff2.forward(p, &g, len);
            let m_ff = dropout(&mut f2, self.dropout_p, rng.as_deref_mut());
            let s2: Vec<T> = h1.iter().zip(&f2).map(|(&x, &y)| x + y).collect();
            let (h2, ln2) = l.ln2.forward(p, &s2, len);
            layers.push(LayerCache {
                attn,
                m_attn,
                ln1,
                h1,
                f1,
                g,
                m_ff,
                ln2,
            });
            h = h2;
        }
        let mut pooled = vec![0.0f64; d];
        for i in (0..len).filter(|&i| valid[i]) {
            for j in 0..d {
                pooled[j] += h[i * d + j].f64();
            }
        }
        let pooled: Vec<T> = pooled.iter().map(|&v| T::of(v / n_valid as f64)).collect();
        let p1 = self.fc1.forward(p, &pooled, 1);
        let mut q = gelu_vec(&p1);
        let m_q = dropout(&mut q, self.dropout_p, rng.as_deref_mut());
        let logit = self.fc2.forward(p, &q, 1)[0];
        Ok((
            logit,
            HeadCache {
                len,
                valid: valid.to_vec(),
                features: features.to_vec(),
                m_in,
                layers,
                pooled,
                p1,
                q,
                m_q,
            },
        ))
    }

    /// Back-propagates `dlogit`. Returns the gradient on the input features and,
    /// when `want_attention_grads`, `∂logit/∂attention` for every layer.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        cache: &HeadCache<T>,
        dlogit: T,
        grads: &mut Grads<T>,
        want_attention_grads: bool,
    ) -> (Vec<T>, Vec<Vec<T>>) {
        let len = cache.len;
        let d = self.d_model;
        let mut dq = self.fc2.backward(p, &cache.q, 1, &[dlogit], grads, true).expect("dx");
        dropout_backward(&mut dq, cache.m_q.as_ref());
        let dp1 = gelu_backward(&cache.p1, &dq);
        let dpool = self.fc1.backward(p, &cache.pooled, 1, &dp1, grads, true).expect("dx");
        let n_valid = cache.valid.iter().filter(|&&v| v).count();
        let inv = T::of(1.0 / n_valid as f64);
        let mut dh = vec![T::zero(); len * d];
        for i in (0..len).filter(|&i| cache.valid[i]) {
            for j in 0..d {
                dh[i * d + j] = dpool[j] * inv;
            }
        }
        let mut attn_grads = Vec::new();
        for (l, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let ds2 = l.ln2.backward(p, &lc.ln2, len, &dh, grads);
            let mut df2 = ds2.clone();
            dropout_backward(&mut df2, lc.m_ff.as_ref());
            let dg = l.ff2.backward(p, &lc.g, len, &df2, grads, true).expect("dx");
            let df1 = gelu_backward(&lc.f1, &dg);
            let dh1_ff = l.ff1.backward(p, &lc.h1, len, &df1, grads, true).expect("dx");
            let dh1: Vec<T> = ds2.iter().zip(&dh1_ff).map(|(&a, &b)| a + b).collect();
            let ds1 = l.ln1.backward(p, &lc.ln1, len, &dh1, grads);
            let mut da = ds1.clone();
            dropout_backward(&mut da, lc.m_attn.as_ref());
            let (dx_attn, pg) = l.attn.backward(p, &lc.attn, &da, grads, want_attention_grads);
            if let Some(pg) = pg {
                attn_grads.push(pg);
            }
            dh = ds1.iter().zip(&dx_attn).map(|(&a, &b)| a + b).collect();
        }
        attn_grads.reverse();
        dropout_backward(&mut dh, cache.m_in.as_ref());
        let dfeat = self
            .input
            .backward(p, &cache.features, len, &dh, grads, true)
            .expect("dx");
        (dfeat, attn_grads)
    }
}
