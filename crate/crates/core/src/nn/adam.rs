use super::params::{Grads, ParamStore};
use crate::scalar::Scalar;

/// Adam with bias correction. Only parameters that carry a gradient slot are updated.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Option<Vec<T>>>,
    v: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, grads: &Grads<T>) -> Self {
        let zeros = |s: &Option<Vec<T>>| s.as_ref().map(|g| vec![T::zero(); g.len()]);
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: grads.slots().iter().map(zeros).collect(),
            v: grads.slots().iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let step_size = T::of(self.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.eps);
        for (idx, slot) in grads.slots().iter().enumerate() {
            let Some(g) = slot else { continue };
            let (Some(m), Some(v)) = (self.m[idx].as_mut(), self.v[idx].as_mut()) else {
                continue;
            };
            let w = &mut store.params_mut()[idx].value;
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                w[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
    }
}
