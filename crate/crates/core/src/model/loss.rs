use crate::scalar::Scalar;

/// `ln(1 + e^x)` without overflow or cancellation.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Loss of one example: `-[w·y·ln σ(z) + (1-y)·ln(1-σ(z))]`.
pub fn bce_term(z: f64, y: f64, pos_weight: f64) -> f64 {
    pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z)
}

/// `∂/∂z` of [`bce_term`].
pub fn bce_term_grad(z: f64, y: f64, pos_weight: f64) -> f64 {
    let s = crate::nn::act::sigmoid(z);
    pos_weight * y * (s - 1.0) + (1.0 - y) * s
}

/// Class-weighted binary cross-entropy averaged over the batch, with the
/// gradient of that mean with respect to every logit.
pub fn weighted_bce<T: Scalar>(logits: &[T], labels: &[f64], pos_weight: f64) -> (f64, Vec<T>) {
    assert_eq!(logits.len(), labels.len());
    assert!(pos_weight > 0.0, "pos_weight must be positive");
    if logits.is_empty() {
        return (0.0, Vec::new());
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        total += bce_term(z.f64(), y, pos_weight);
        grad.push(T::of(bce_term_grad(z.f64(), y, pos_weight) / n));
    }
    (total / n, grad)
}

/// `N_neg / N_pos` over the training labels.
pub fn pos_weight(labels: &[f64]) -> Option<f64> {
    let pos = labels.iter().filter(|&&y| y > 0.5).count();
    let neg = labels.len() - pos;
    (pos > 0 && neg > 0).then(|| neg as f64 / pos as f64)
}
