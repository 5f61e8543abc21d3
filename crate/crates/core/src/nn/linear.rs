use rand_chacha::ChaCha8Rng;

use super::linalg::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::params::{Grads, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Affine map applied to each row of an `(n × fan_in)` matrix.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), &[fan_out, fan_in], fan_in, rng);
        let bias = store.add_uniform(format!("{name}.bias"), &[fan_out], fan_in, rng);
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Scalar>(&self, p: &ParamStore<T>, x: &[T], rows: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), rows * self.fan_in);
        let b = p.get(self.bias);
        let mut y = Vec::with_capacity(rows * self.fan_out);
        for _ in 0..rows {
            y.extend_from_slice(b);
        }
        matmul_nt_acc(x, p.get(self.weight), &mut y, rows, self.fan_in, self.fan_out);
        y
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        x: &[T],
        rows: usize,
        dy: &[T],
        grads: &mut Grads<T>,
        need_dx: bool,
    ) -> Option<Vec<T>> {
        debug_assert_eq!(dy.len(), rows * self.fan_out);
        if let Some(db) = grads.slot(self.bias) {
            for r in 0..rows {
                for (g, &d) in db.iter_mut().zip(&dy[r * self.fan_out..(r + 1) * self.fan_out]) {
                    *g += d;
                }
            }
        }
        if let Some(dw) = grads.slot(self.weight) {
            matmul_tn_acc(dy, x, dw, rows, self.fan_out, self.fan_in);
        }
        need_dx.then(|| {
            let mut dx = vec![T::zero(); rows * self.fan_in];
            matmul_acc(dy, p.get(self.weight), &mut dx, rows, self.fan_out, self.fan_in);
            dx
        })
    }
}
