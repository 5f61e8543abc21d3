use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Inverted dropout applied in place. Returns the scaled keep-mask for the
/// backward pass, or `None` when inactive (eval mode or `p == 0`).
pub fn dropout<T: Scalar>(x: &mut [T], p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<T>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - p));
    let mask: Vec<T> = x
        .iter()
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect();
    x.iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
    Some(mask)
}

pub fn dropout_backward<T: Scalar>(dy: &mut [T], mask: Option<&Vec<T>>) {
    if let Some(m) = mask {
        dy.iter_mut().zip(m).for_each(|(g, &k)| *g *= k);
    }
}
