//! Window encoder: a stem convolution, four EnCodec-style blocks (residual unit
//! followed by a strided convolution), two fully connected layers producing the
//! window embedding, and a two-layer classifier producing the window logit.

use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::nn::act::{elu_backward, elu_vec};
use crate::nn::dropout::{dropout, dropout_backward};
use crate::nn::{Conv1d, Grads, Linear, ParamStore};
use crate::scalar::Scalar;

/// Windows arrive in µV; the stem sees millivolts.
pub const INPUT_SCALE: f64 = 1e-3;

#[derive(Debug, Clone)]
struct EncodecBlock {
    res_a: Conv1d,
    res_b: Conv1d,
    down: Conv1d,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    stem: Conv1d,
    blocks: Vec<EncodecBlock>,
    fc1: Linear,
    fc2: Linear,
    cls1: Linear,
    cls2: Linear,
    window_len: usize,
    dropout_p: f64,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    len: usize,
    u: Vec<T>,
    e1: Vec<T>,
    r1: Vec<T>,
    e2: Vec<T>,
    v: Vec<T>,
    e3: Vec<T>,
}

/// Forward state of one window, consumed by [`Encoder::backward`].
#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    input: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    flat: Vec<T>,
    e4: Vec<T>,
    f1: Vec<T>,
    e5: Vec<T>,
    m5: Option<Vec<T>>,
    feat: Vec<T>,
    g0: Vec<T>,
    m0: Option<Vec<T>>,
    z1: Vec<T>,
    g1: Vec<T>,
    m1: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct WindowOutput<T> {
    pub features: Vec<T>,
    pub logit: T,
}

impl Encoder {
    pub const PREFIX: &'static str = "encoder.";

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let c = cfg.enc_filters;
        let stem = Conv1d::same(store, "encoder.stem", 1, c, cfg.enc_first_kernel, rng);
        let blocks = cfg
            .enc_strides
            .iter()
            .enumerate()
            .map(|(i, &s)| EncodecBlock {
                res_a: Conv1d::same(store, &format!("encoder.block{i}.res_a"), c, cfg.res_hidden(), cfg.res_kernel, rng),
                res_b: Conv1d::same(store, &format!("encoder.block{i}.res_b"), cfg.res_hidden(), c, 1, rng),
                down: Conv1d::downsample(store, &format!("encoder.block{i}.down"), c, s, rng),
            })
            .collect();
        let flat = c * cfg.timesteps();
        Self {
            stem,
            blocks,
            fc1: Linear::new(store, "encoder.fc1", flat, cfg.enc_fc_hidden, rng),
            fc2: Linear::new(store, "encoder.fc2", cfg.enc_fc_hidden, cfg.feat_dim, rng),
            cls1: Linear::new(store, "encoder.cls1", cfg.feat_dim, cfg.cls_hidden, rng),
            cls2: Linear::new(store, "encoder.cls2", cfg.cls_hidden, 1, rng),
            window_len: cfg.window_len,
            dropout_p: cfg.dropout_p,
        }
    }

    /// Runs one window (µV). Dropout is active iff `rng` is supplied.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        window: &[T],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (WindowOutput<T>, EncoderCache<T>) {
        assert_eq!(window.len(), self.window_len);
        let mut len = self.window_len;
        let input: Vec<T> = window.iter().map(|&v| v * T::of(INPUT_SCALE)).collect();
        let mut x = self.stem.forward(p, &input, len);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let e1 = elu_vec(&x);
            let r1 = b.res_a.forward(p, &e1, len);
            let e2 = elu_vec(&r1);
            let r2 = b.res_b.forward(p, &e2, len);
            let v: Vec<T> = x.iter().zip(&r2).map(|(&a, &c)| a + c).collect();
            let e3 = elu_vec(&v);
            let next = b.down.forward(p, &e3, len);
            let next_len = b.down.out_len(len);
            blocks.push(BlockCache {
                len,
                u: x,
                e1,
                r1,
                e2,
                v,
                e3,
            });
            x = next;
            len = next_len;
        }
        let flat = x;
        let e4 = elu_vec(&flat);
        let f1 = self.fc1.forward(p, &e4, 1);
        let mut e5 = elu_vec(&f1);
        let m5 = dropout(&mut e5, self.dropout_p, rng.as_deref_mut());
        let feat = self.fc2.forward(p, &e5, 1);
        let mut g0 = elu_vec(&feat);
        let m0 = dropout(&mut g0, self.dropout_p, rng.as_deref_mut());
        let z1 = self.cls1.forward(p, &g0, 1);
        let mut g1 = elu_vec(&z1);
        let m1 = dropout(&mut g1, self.dropout_p, rng.as_deref_mut());
        let logit = self.cls2.forward(p, &g1, 1)[0];
        let out = WindowOutput {
            features: feat.clone(),
            logit,
        };
        let cache = EncoderCache {
            input,
            blocks,
            flat,
            e4,
            f1,
            e5,
            m5,
            feat,
            g0,
            m0,
            z1,
            g1,
            m1,
        };
        (out, cache)
    }

    /// Embedding and logit without keeping intermediate state (eval mode).
    pub fn infer<T: Scalar>(&self, p: &ParamStore<T>, window: &[T]) -> WindowOutput<T> {
        self.forward(p, window, None).0
    }

    /// Back-propagates `dlogit` (and optionally a gradient on the embedding).
    pub fn backward<T: Scalar>(
        &self,
        p: &ParamStore<T>,
        cache: &EncoderCache<T>,
        dlogit: T,
        dfeat: Option<&[T]>,
        grads: &mut Grads<T>,
    ) {
        let mut dg1 = self
            .cls2
            .backward(p, &cache.g1, 1, &[dlogit], grads, true)
            .expect("dx");
        dropout_backward(&mut dg1, cache.m1.as_ref());
        let dz1 = elu_backward(&cache.z1, &dg1);
        let mut dg0 = self.cls1.backward(p, &cache.g0, 1, &dz1, grads, true).expect("dx");
        dropout_backward(&mut dg0, cache.m0.as_ref());
        let mut dfe = elu_backward(&cache.feat, &dg0);
        if let Some(extra) = dfeat {
            dfe.iter_mut().zip(extra).for_each(|(a, &b)| *a += b);
        }
        let mut de5 = self.fc2.backward(p, &cache.e5, 1, &dfe, grads, true).expect("dx");
        dropout_backward(&mut de5, cache.m5.as_ref());
        let df1 = elu_backward(&cache.f1, &de5);
        let de4 = self.fc1.backward(p, &cache.e4, 1, &df1, grads, true).expect("dx");
        let mut dx = elu_backward(&cache.flat, &de4);
        for (b, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let de3 = b.down.backward(p, &bc.e3, bc.len, &dx, grads, true).expect("dx");
            let dv = elu_backward(&bc.v, &de3);
            let de2 = b.res_b.backward(p, &bc.e2, bc.len, &dv, grads, true).expect("dx");
            let dr1 = elu_backward(&bc.r1, &de2);
            let de1 = b.res_a.backward(p, &bc.e1, bc.len, &dr1, grads, true).expect("dx");
            let du = elu_backward(&bc.u, &de1);
            dx = dv.iter().zip(&du).map(|(&a, &c)| a + c).collect();
        }
        self.stem.backward(p, &cache.input, self.window_len, &dx, grads, false);
    }
}
