use super::params::{Grads, ParamId, ParamStore};
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

/// Layer normalisation over the feature axis of a row-major `(rows × dim)` matrix.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        let gamma = store.add_const(format!("{name}.gamma"), &[dim], 1.0);
        let beta = store.add_const(format!("{name}.beta"), &[dim], 0.0);
        Self { gamma, beta, dim }
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        x: &[T],
        rows: usize,
    ) -> (Vec<T>, LayerNormCache<T>) {
        let d = self.dim;
        let g = p.get(self.gamma);
        let b = p.get(self.beta);
        let mut y = vec![T::zero(); rows * d];
        let mut xhat = vec![T::zero(); rows * d];
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = T::of(is);
            for j in 0..d {
                let xh = T::of((row[j].f64() - mean) * is);
                xhat[r * d + j] = xh;
                y[r * d + j] = xh * g[j] + b[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        cache: &LayerNormCache<T>,
        rows: usize,
        dy: &[T],
        grads: &mut Grads<T>,
    ) -> Vec<T> {
        let d = self.dim;
        if let Some(dg) = grads.slot(self.gamma) {
            for r in 0..rows {
                for j in 0..d {
                    dg[j] += dy[r * d + j] * cache.xhat[r * d + j];
                }
            }
        }
        if let Some(db) = grads.slot(self.beta) {
            for r in 0..rows {
                for j in 0..d {
                    db[j] += dy[r * d + j];
                }
            }
        }
        let g = p.get(self.gamma);
        let mut dx = vec![T::zero(); rows * d];
        let n = T::of(d as f64);
        for r in 0..rows {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let dxh: Vec<T> = (0..d).map(|j| dy[r * d + j] * g[j]).collect();
            let s1: T = dxh.iter().copied().sum();
            let s2: T = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            let is = cache.inv_std[r];
            for j in 0..d {
                dx[r * d + j] = is / n * (n * dxh[j] - s1 - xh[j] * s2);
            }
        }
        dx
    }
}
