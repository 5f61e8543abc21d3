use rand_chacha::ChaCha8Rng;

use super::linalg::{matmul_acc, matmul_tn_acc};
use super::linear::Linear;
use super::params::{Grads, ParamStore};
use crate::scalar::Scalar;

/// Multi-head scaled dot-product self-attention with a key padding mask.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub d_model: usize,
    pub n_heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pub len: usize,
    x: Vec<T>,
    /// Per-head `(len × head_dim)` projections.
    q: Vec<Vec<T>>,
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    /// Post-softmax attention, `n_heads × len × len`.
    pub probs: Vec<T>,
    concat: Vec<T>,
}

fn split_heads<T: Scalar>(x: &[T], len: usize, d: usize, heads: usize) -> Vec<Vec<T>> {
    let dh = d / heads;
    (0..heads)
        .map(|h| {
            let mut out = Vec::with_capacity(len * dh);
            for i in 0..len {
                out.extend_from_slice(&x[i * d + h * dh..i * d + (h + 1) * dh]);
            }
            out
        })
        .collect()
}

fn transpose<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = x[r * cols + c];
        }
    }
    t
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(n_heads > 0 && d_model % n_heads == 0);
        Self {
            query: Linear::new(store, &format!("{name}.query"), d_model, d_model, rng),
            key: Linear::new(store, &format!("{name}.key"), d_model, d_model, rng),
            value: Linear::new(store, &format!("{name}.value"), d_model, d_model, rng),
            out: Linear::new(store, &format!("{name}.out"), d_model, d_model, rng),
            d_model,
            n_heads,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// `valid[j] == false` removes key `j` from every softmax.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        x: &[T],
        len: usize,
        valid: &[bool],
    ) -> (Vec<T>, AttentionCache<T>) {
        let d = self.d_model;
        let heads = self.n_heads;
        let dh = self.head_dim();
        let q = split_heads(&self.query.forward(p, x, len), len, d, heads);
        let k = split_heads(&self.key.forward(p, x, len), len, d, heads);
        let v = split_heads(&self.value.forward(p, x, len), len, d, heads);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut probs = vec![T::zero(); heads * len * len];
        let mut concat = vec![T::zero(); len * d];
        for h in 0..heads {
            let kt = transpose(&k[h], len, dh);
            let a = &mut probs[h * len * len..(h + 1) * len * len];
            matmul_acc(&q[h], &kt, a, len, dh, len);
            for i in 0..len {
                let row = &mut a[i * len..(i + 1) * len];
                let mut mx = T::neg_infinity();
                for (j, s) in row.iter_mut().enumerate() {
                    *s *= scale;
                    if valid[j] && *s > mx {
                        mx = *s;
                    }
                }
                let mut z = 0.0f64;
                for (j, s) in row.iter_mut().enumerate() {
                    if valid[j] {
                        *s = (*s - mx).exp();
                        z += s.f64();
                    } else {
                        *s = T::zero();
                    }
                }
                let inv = T::of(1.0 / z);
                row.iter_mut().for_each(|s| *s *= inv);
            }
            let mut oh = vec![T::zero(); len * dh];
            matmul_acc(a, &v[h], &mut oh, len, len, dh);
            for i in 0..len {
                concat[i * d + h * dh..i * d + (h + 1) * dh]
                    .copy_from_slice(&oh[i * dh..(i + 1) * dh]);
            }
        }
        let out = self.out.forward(p, &concat, len);
        (
            out,
            AttentionCache {
                len,
                x: x.to_vec(),
                q,
                k,
                v,
                probs,
                concat,
            },
        )
    }

    /// Returns `dx`, plus `∂out/∂probs` (`n_heads × len × len`) when `want_prob_grads`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        cache: &AttentionCache<T>,
        dy: &[T],
        grads: &mut Grads<T>,
        want_prob_grads: bool,
    ) -> (Vec<T>, Option<Vec<T>>) {
        let len = cache.len;
        let d = self.d_model;
        let heads = self.n_heads;
        let dh = self.head_dim();
        let scale = T::one() / T::of(dh as f64).sqrt();
        let dconcat = self
            .out
            .backward(p, &cache.concat, len, dy, grads, true)
            .expect("dx requested");
        let mut dq = vec![T::zero(); len * d];
        let mut dk = vec![T::zero(); len * d];
        let mut dv = vec![T::zero(); len * d];
        let mut prob_grads = want_prob_grads.then(|| vec![T::zero(); heads * len * len]);
        for h in 0..heads {
            let a = &cache.probs[h * len * len..(h + 1) * len * len];
            let mut doh = Vec::with_capacity(len * dh);
            for i in 0..len {
                doh.extend_from_slice(&dconcat[i * d + h * dh..i * d + (h + 1) * dh]);
            }
            // dA = dO · Vᵀ
            let vt = transpose(&cache.v[h], len, dh);
            let mut da = vec![T::zero(); len * len];
            matmul_acc(&doh, &vt, &mut da, len, dh, len);
            if let Some(pg) = prob_grads.as_mut() {
                pg[h * len * len..(h + 1) * len * len].copy_from_slice(&da);
            }
            // dV = Aᵀ · dO
            let mut dvh = vec![T::zero(); len * dh];
            matmul_tn_acc(a, &doh, &mut dvh, len, len, dh);
            // softmax backward, reusing `da` as dS
            for i in 0..len {
                let arow = &a[i * len..(i + 1) * len];
                let drow = &mut da[i * len..(i + 1) * len];
                let s: T = arow.iter().zip(drow.iter()).map(|(&x, &y)| x * y).sum();
                for (dsv, &av) in drow.iter_mut().zip(arow) {
                    *dsv = av * (*dsv - s) * scale;
                }
            }
            let mut dqh = vec![T::zero(); len * dh];
            matmul_acc(&da, &cache.k[h], &mut dqh, len, len, dh);
            let mut dkh = vec![T::zero(); len * dh];
            matmul_tn_acc(&da, &cache.q[h], &mut dkh, len, len, dh);
            for i in 0..len {
                let dst = i * d + h * dh..i * d + (h + 1) * dh;
                dq[dst.clone()].copy_from_slice(&dqh[i * dh..(i + 1) * dh]);
                dk[dst.clone()].copy_from_slice(&dkh[i * dh..(i + 1) * dh]);
                dv[dst].copy_from_slice(&dvh[i * dh..(i + 1) * dh]);
            }
        }
        let mut dx = self
            .query
            .backward(p, &cache.x, len, &dq, grads, true)
            .expect("dx requested");
        for (src, lin) in [(&dk, &self.key), (&dv, &self.value)] {
            let part = lin.backward(p, &cache.x, len, src, grads, true).expect("dx requested");
            dx.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
        (dx, prob_grads)
    }
}
