use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};
use crate::scalar::{axpy, dot, Scalar};

/// 1-D convolution over a channel-major `(channels × length)` buffer.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = cin * kernel;
        let weight = store.add_uniform(format!("{name}.weight"), &[cout, cin, kernel], fan_in, rng);
        let bias = store.add_uniform(format!("{name}.bias"), &[cout], fan_in, rng);
        Self {
            weight,
            bias,
            cin,
            cout,
            kernel,
            stride,
            pad_left,
            pad_right,
        }
    }

    /// Stride-1 convolution that preserves length (odd kernels).
    pub fn same<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let pad = kernel - 1;
        Self::new(store, name, cin, cout, kernel, 1, pad / 2, pad - pad / 2, rng)
    }

    /// Strided down-sampling convolution with kernel `2·stride`; output length is `len / stride`.
    pub fn downsample<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let pad = stride;
        Self::new(
            store,
            name,
            channels,
            channels,
            2 * stride,
            stride,
            pad - pad / 2,
            pad / 2,
            rng,
        )
    }

    pub fn out_len(&self, lin: usize) -> usize {
        (lin + self.pad_left + self.pad_right - self.kernel) / self.stride + 1
    }

    /// Output positions `t` whose tap `kk` reads inside the input.
    #[inline]
    fn t_range(&self, kk: usize, lin: usize, lout: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad_left > kk {
            (self.pad_left - kk).div_ceil(s)
        } else {
            0
        };
        let hi_incl = (lin - 1 + self.pad_left) as isize - kk as isize;
        if hi_incl < 0 {
            return (0, 0);
        }
        let hi = ((hi_incl as usize) / s + 1).min(lout);
        (lo.min(hi), hi)
    }

    pub fn forward<T: Scalar>(&self, p: &ParamStore<T>, x: &[T], lin: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cin * lin);
        let lout = self.out_len(lin);
        let w = p.get(self.weight);
        let b = p.get(self.bias);
        let mut y = vec![T::zero(); self.cout * lout];
        let s = self.stride;
        for o in 0..self.cout {
            let yrow = &mut y[o * lout..(o + 1) * lout];
            yrow.iter_mut().for_each(|v| *v = b[o]);
            for i in 0..self.cin {
                let xrow = &x[i * lin..(i + 1) * lin];
                let wrow = &w[(o * self.cin + i) * self.kernel..(o * self.cin + i + 1) * self.kernel];
                for (kk, &wk) in wrow.iter().enumerate() {
                    let (t0, t1) = self.t_range(kk, lin, lout);
                    if t0 >= t1 {
                        continue;
                    }
                    let x0 = t0 * s + kk - self.pad_left;
                    if s == 1 {
                        axpy(wk, &xrow[x0..x0 + (t1 - t0)], &mut yrow[t0..t1]);
                    } else {
                        for (j, yv) in yrow[t0..t1].iter_mut().enumerate() {
                            *yv += wk * xrow[x0 + j * s];
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns `dx` when `need_dx`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        x: &[T],
        lin: usize,
        dy: &[T],
        grads: &mut Grads<T>,
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let lout = self.out_len(lin);
        debug_assert_eq!(dy.len(), self.cout * lout);
        let s = self.stride;
        let k = self.kernel;
        if let Some(db) = grads.slot(self.bias) {
            for o in 0..self.cout {
                db[o] += dy[o * lout..(o + 1) * lout].iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = grads.slot(self.weight) {
            for o in 0..self.cout {
                let dyrow = &dy[o * lout..(o + 1) * lout];
                for i in 0..self.cin {
                    let xrow = &x[i * lin..(i + 1) * lin];
                    for kk in 0..k {
                        let (t0, t1) = self.t_range(kk, lin, lout);
                        if t0 >= t1 {
                            continue;
                        }
                        let x0 = t0 * s + kk - self.pad_left;
                        let g = if s == 1 {
                            dot(&dyrow[t0..t1], &xrow[x0..x0 + (t1 - t0)])
                        } else {
                            let mut acc = T::zero();
                            for (j, &d) in dyrow[t0..t1].iter().enumerate() {
                                acc += d * xrow[x0 + j * s];
                            }
                            acc
                        };
                        dw[(o * self.cin + i) * k + kk] += g;
                    }
                }
            }
        }
        if !need_dx {
            return None;
        }
        let w = p.get(self.weight);
        let mut dx = vec![T::zero(); self.cin * lin];
        for o in 0..self.cout {
            let dyrow = &dy[o * lout..(o + 1) * lout];
            for i in 0..self.cin {
                let dxrow = &mut dx[i * lin..(i + 1) * lin];
                for kk in 0..k {
                    let wk = w[(o * self.cin + i) * k + kk];
                    let (t0, t1) = self.t_range(kk, lin, lout);
                    if t0 >= t1 {
                        continue;
                    }
                    let x0 = t0 * s + kk - self.pad_left;
                    if s == 1 {
                        axpy(wk, &dyrow[t0..t1], &mut dxrow[x0..x0 + (t1 - t0)]);
                    } else {
                        for (j, &d) in dyrow[t0..t1].iter().enumerate() {
                            dxrow[x0 + j * s] += wk * d;
                        }
                    }
                }
            }
        }
        Some(dx)
    }
}
