//! ROC and precision-recall analysis with bootstrap intervals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{check_inputs, EvalError};

/// Midranks (1-based) of `x`, ties sharing their average rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points for "positive iff score ≥ threshold", from +∞ down to the
/// lowest score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, EvalError> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut pts = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (t, p, n) in descending_groups(scores, labels) {
        tp += p;
        fp += n;
        pts.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(pts)
}

/// Distinct scores in descending order with their positive and negative counts.
fn descending_groups(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for i in idx {
        let (p, n) = if labels[i] { (1, 0) } else { (0, 1) };
        match out.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += p;
                g.2 += n;
            }
            _ => out.push((scores[i], p, n)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub auprc: f64,
    /// `(threshold, recall, precision)`, starting from the (0, 1) anchor.
    pub points: Vec<(f64, f64, f64)>,
}

/// Precision-recall sweep over distinct thresholds; area by the trapezoid rule
/// over recall.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve, EvalError> {
    let (n_pos, _) = check_inputs(scores, labels)?;
    let mut points = vec![(f64::INFINITY, 0.0, 1.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (t, p, n) in descending_groups(scores, labels) {
        tp += p;
        fp += n;
        points.push((t, tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
    }
    let auprc = points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) * (w[1].2 + w[0].2) / 2.0)
        .sum();
    Ok(PrCurve { auprc, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bootstrap {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub distribution: Vec<f64>,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// AUROC over `iters` resamples of `n_pos` positives and `n_neg` negatives,
/// each class drawn with replacement; 95% percentile interval.
pub fn bootstrap_auroc(
    scores: &[f64],
    labels: &[bool],
    iters: usize,
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<Bootstrap, EvalError> {
    check_inputs(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut lab = vec![true; n_pos];
    lab.resize(n_pos + n_neg, false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dist = Vec::with_capacity(iters);
    let mut sample = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..iters {
        sample.clear();
        sample.extend((0..n_pos).map(|_| pos[rng.random_range(0..pos.len())]));
        sample.extend((0..n_neg).map(|_| neg[rng.random_range(0..neg.len())]));
        dist.push(auroc(&sample, &lab)?);
    }
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(Bootstrap {
        mean: dist.iter().sum::<f64>() / iters as f64,
        ci_low: percentile(&sorted, 0.025),
        ci_high: percentile(&sorted, 0.975),
        distribution: dist,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sample Student t-test with pooled variance; returns `(t, two-sided p)`.
pub fn compare_models(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if a.len() < 2 || b.len() < 2 {
        return (0.0, 1.0);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let dof = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / dof;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let diff = ma - mb;
    if diff == 0.0 {
        return (0.0, 1.0);
    }
    if se == 0.0 {
        return (diff.signum() * f64::INFINITY, 0.0);
    }
    let t = diff / se;
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    (t, p)
}
