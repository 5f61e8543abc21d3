//! R-peak detection in the spirit of jqrs: band-pass, squared slope energy,
//! block-wise adaptive threshold, refractory period.

use super::filter::bandpass;

pub const REFRACTORY_S: f64 = 0.25;
const BAND_HZ: (f64, f64) = (5.0, 15.0);
const INTEGRATION_S: f64 = 0.15;
const BLOCK_S: f64 = 10.0;
/// Fraction of the block's high-percentile energy a beat must exceed.
const THRESHOLD_FRAC: f64 = 0.3;
const REFINE_S: f64 = 0.07;
/// Energy floor (µV² per squared sample step) below which nothing is a beat.
const MIN_ENERGY: f64 = 1.0;

fn percentile(v: &mut [f64], q: f64) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample indices of R peaks in `x` (µV), ascending.
pub fn detect_r_peaks(x: &[f64], fs: f64) -> Vec<usize> {
    let n = x.len();
    if n < 8 {
        return Vec::new();
    }
    let bp = bandpass(x, BAND_HZ.0, BAND_HZ.1.min(0.45 * fs), fs);
    let mut energy = vec![0.0; n];
    for i in 1..n - 1 {
        let d = bp[i + 1] - bp[i - 1];
        energy[i] = d * d;
    }
    let half = ((INTEGRATION_S * fs) as usize / 2).max(1);
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + energy[i];
    }
    let mwi: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();

    let block = ((BLOCK_S * fs) as usize).max(1);
    let mut thr = vec![0.0; n];
    for start in (0..n).step_by(block) {
        let end = (start + block).min(n);
        let mut b = mwi[start..end].to_vec();
        let t = (THRESHOLD_FRAC * percentile(&mut b, 0.99)).max(MIN_ENERGY);
        thr[start..end].iter_mut().for_each(|v| *v = t);
    }

    let refine = (REFINE_S * fs).round() as usize;
    let base_half = (0.25 * fs) as usize;
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        if thr[i] > 0.0 && mwi[i] > thr[i] {
            let s = i;
            while i < n && mwi[i] > thr[i] {
                i += 1;
            }
            let (mut best, mut best_v) = (s, -1.0);
            for (k, v) in bp.iter().enumerate().take(i).skip(s) {
                if v.abs() > best_v {
                    best = k;
                    best_v = v.abs();
                }
            }
            let lo = best.saturating_sub(base_half);
            let hi = (best + base_half + 1).min(n);
            let baseline = median(x[lo..hi].to_vec());
            let lo = best.saturating_sub(refine);
            let hi = (best + refine + 1).min(n);
            let mut r = best;
            let mut r_v = -1.0;
            for (k, &v) in x.iter().enumerate().take(hi).skip(lo) {
                if (v - baseline).abs() > r_v {
                    r = k;
                    r_v = (v - baseline).abs();
                }
            }
            candidates.push((r, best_v));
        } else {
            i += 1;
        }
    }

    let refractory = (REFRACTORY_S * fs) as usize;
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for c in candidates {
        match peaks.last_mut() {
            Some(last) if c.0 <= last.0 + refractory => {
                if c.1 > last.1 {
                    *last = c;
                }
            }
            _ => peaks.push(c),
        }
    }
    let mut out: Vec<usize> = peaks.into_iter().map(|p| p.0).collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat_train(n: usize, fs: f64, rr_s: f64, first_s: f64) -> (Vec<f64>, Vec<usize>) {
        let mut x = vec![0.0; n];
        let mut truth = Vec::new();
        let mut t = first_s;
        while ((t * fs).round() as usize) < n {
            let r = (t * fs).round() as usize;
            truth.push(r);
            for k in -6i64..=6 {
                let j = r as i64 + k;
                if j >= 0 && (j as usize) < n {
                    x[j as usize] += 1000.0 * (1.0 - k.abs() as f64 / 6.0);
                }
            }
            for k in 20..60 {
                let j = r + k;
                if j < n {
                    let u = (k as f64 - 36.0) / 6.0;
                    x[j] += 250.0 * (-0.5 * u * u).exp();
                }
            }
            t += rr_s;
        }
        (x, truth)
    }

    #[test]
    fn finds_every_beat_of_clean_sixty_bpm() {
        let fs = 128.0;
        let (x, truth) = beat_train(1280, fs, 1.0, 0.5);
        assert_eq!(truth.len(), 10);
        assert_eq!(detect_r_peaks(&x, fs), truth);
    }

    #[test]
    fn refractory_period_suppresses_double_detections() {
        let fs = 128.0;
        let (x, truth) = beat_train(128 * 60, fs, 0.4, 0.3);
        let p = detect_r_peaks(&x, fs);
        assert_eq!(p, truth);
        assert!(p.windows(2).all(|w| w[1] - w[0] > 32));
    }

    #[test]
    fn flat_line_has_no_peaks() {
        assert!(detect_r_peaks(&vec![0.0; 1280], 128.0).is_empty());
        assert!(detect_r_peaks(&vec![250.0; 1280], 128.0).is_empty());
    }
}
