//! Deterministic synthetic Holter generator.
//!
//! Beats are built from fixed bumps: Gaussian P and T waves around a
//! triangular QRS whose support is exactly [`SINUS_QRS_SAMPLES`] samples
//! (wide beats use [`PVC_QRS_SAMPLES`]). Heart rate follows a cosine over the
//! day peaking at 15:00. PVC bursts are bigeminal runs; AF episodes drop the
//! P wave, randomize RR and add a 6 Hz fibrillatory ripple.

use chrono::{Duration, NaiveDateTime, NaiveTime, Timelike};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EcgRecording, SignalError, FS};

pub const SINUS_QRS_SAMPLES: usize = 12;
pub const PVC_QRS_SAMPLES: usize = 24;
/// Wall-clock window that receives daytime-biased bursts.
pub const DAYTIME_START_H: u32 = 7;
pub const DAYTIME_END_H: u32 = 20;

const SINUS_QRS_UV: f64 = 1100.0;
const PVC_QRS_UV: f64 = 1500.0;
// (amplitude µV, centre s relative to R, sigma s)
const P_WAVE: (f64, f64, f64) = (120.0, -0.18, 0.022);
const T_WAVE: (f64, f64, f64) = (300.0, 0.28, 0.045);
const PVC_T_WAVE: (f64, f64, f64) = (-400.0, 0.30, 0.06);
const TEMPLATE_HALF_S: f64 = 0.5;
const PVC_COUPLING: f64 = 0.6;
const AF_RR_JITTER: f64 = 0.4;
const AF_RIPPLE_HZ: f64 = 6.0;
const AF_RIPPLE_UV: f64 = 40.0;
const AF_MINUTES: (f64, f64) = (30.0, 120.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub duration_h: f64,
    pub mean_hr: f64,
    /// Peak-to-mean amplitude of the daily heart-rate cosine.
    pub hr_circadian_amp: f64,
    pub pvc_burst_rate: f64,
    /// Probability that a burst is placed inside 07:00–20:00.
    pub pvc_burst_daytime_bias: f64,
    pub af_episode_prob: f64,
    pub noise_rms: f64,
    pub burst_minutes: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_h: 24.0,
            mean_hr: 70.0,
            hr_circadian_amp: 8.0,
            pvc_burst_rate: 0.0,
            pvc_burst_daytime_bias: 0.5,
            af_episode_prob: 0.0,
            noise_rms: 10.0,
            burst_minutes: 15.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: &str| Err(SignalError::InvalidSpec(m.to_string()));
        if !(20.0..=30.0).contains(&self.duration_h) {
            return bad("duration_h must lie in [20, 30]");
        }
        if !(self.mean_hr > 0.0) || self.hr_circadian_amp < 0.0 || self.mean_hr - self.hr_circadian_amp < 20.0 {
            return bad("heart rate must stay above 20 bpm");
        }
        if self.pvc_burst_rate < 0.0 || self.noise_rms < 0.0 || self.burst_minutes < 0.0 {
            return bad("rates must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.pvc_burst_daytime_bias) || !(0.0..=1.0).contains(&self.af_episode_prob) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }

    /// Number of bursts planted: `round(rate · duration)`.
    pub fn n_bursts(&self) -> usize {
        (self.pvc_burst_rate * self.duration_h).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beat {
    pub r: usize,
    pub pvc: bool,
}

/// Ground truth of what was planted; sample indices are half-open ranges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthTruth {
    pub bursts: Vec<(usize, usize)>,
    pub af_episodes: Vec<(usize, usize)>,
    pub beats: Vec<Beat>,
}

impl SynthTruth {
    pub fn in_burst(&self, sample: usize) -> bool {
        self.bursts.iter().any(|&(a, b)| sample >= a && sample < b)
    }
}

#[derive(Debug, Clone)]
pub struct Synthesized {
    pub recording: EcgRecording,
    pub truth: SynthTruth,
}

fn hours_of_day(t: NaiveDateTime) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0
}

/// Heart rate (bpm) at wall-clock hour `h`.
pub fn circadian_hr(spec: &SynthSpec, h: f64) -> f64 {
    spec.mean_hr + spec.hr_circadian_amp * (2.0 * std::f64::consts::PI * (h - 15.0) / 24.0).cos()
}

/// Sample ranges of the recording falling in 07:00–20:00 that can hold `len` samples.
fn daytime_ranges(start: NaiveDateTime, n: usize, len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let day0 = start.date();
    for d in -1..=2 {
        let day = day0 + Duration::days(d);
        let a = day.and_time(NaiveTime::from_hms_opt(DAYTIME_START_H, 0, 0).expect("valid"));
        let b = day.and_time(NaiveTime::from_hms_opt(DAYTIME_END_H, 0, 0).expect("valid"));
        let to_idx = |t: NaiveDateTime| (t - start).num_seconds() * FS as i64;
        let lo = to_idx(a).max(0);
        let hi = to_idx(b).min(n as i64);
        if hi - lo >= len as i64 {
            out.push((lo as usize, (hi as usize) - len));
        }
    }
    out
}

fn gaussian_bump(buf: &mut [f32], r: usize, (amp, centre, sigma): (f64, f64, f64)) {
    let fs = FS as f64;
    let c = r as f64 + centre * fs;
    let s = sigma * fs;
    let lo = (c - 5.0 * s).floor().max(0.0) as usize;
    let hi = ((c + 5.0 * s).ceil() as usize + 1).min(buf.len());
    for (k, v) in buf.iter_mut().enumerate().take(hi).skip(lo) {
        let u = (k as f64 - c) / s;
        *v += (amp * (-0.5 * u * u).exp()) as f32;
    }
}

fn triangle(buf: &mut [f32], r: usize, width: usize, amp: f64) {
    let half = (width / 2) as i64;
    for k in -half..=half {
        let j = r as i64 + k;
        if j >= 0 && (j as usize) < buf.len() {
            buf[j as usize] += (amp * (1.0 - k.abs() as f64 / half as f64)) as f32;
        }
    }
}

fn add_beat(buf: &mut [f32], r: usize, pvc: bool, with_p: bool) {
    if pvc {
        triangle(buf, r, PVC_QRS_SAMPLES, PVC_QRS_UV);
        gaussian_bump(buf, r, PVC_T_WAVE);
    } else {
        if with_p {
            gaussian_bump(buf, r, P_WAVE);
        }
        triangle(buf, r, SINUS_QRS_SAMPLES, SINUS_QRS_UV);
        gaussian_bump(buf, r, T_WAVE);
    }
}

pub fn synthesize(
    spec: &SynthSpec,
    exam_id: &str,
    patient_id: &str,
    start_time: NaiveDateTime,
) -> Result<Synthesized, SignalError> {
    spec.validate()?;
    let fs = FS as f64;
    let n = (spec.duration_h * 3600.0 * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let burst_len = (spec.burst_minutes * 60.0 * fs).round() as usize;
    let mut bursts = Vec::new();
    if burst_len > 0 && burst_len < n {
        let day = daytime_ranges(start_time, n, burst_len);
        for _ in 0..spec.n_bursts() {
            let daytime = rng.random::<f64>() < spec.pvc_burst_daytime_bias;
            let start = if daytime && !day.is_empty() {
                let total: usize = day.iter().map(|&(a, b)| b - a + 1).sum();
                let mut pick = rng.random_range(0..total);
                let mut s = day[0].0;
                for &(a, b) in &day {
                    if pick <= b - a {
                        s = a + pick;
                        break;
                    }
                    pick -= b - a + 1;
                }
                s
            } else {
                rng.random_range(0..=n - burst_len)
            };
            bursts.push((start, start + burst_len));
        }
        bursts.sort_unstable();
    }

    let mut af_episodes = Vec::new();
    if rng.random::<f64>() < spec.af_episode_prob {
        let len = (rng.random_range(AF_MINUTES.0..=AF_MINUTES.1) * 60.0 * fs) as usize;
        let len = len.min(n);
        let s = rng.random_range(0..=n - len);
        af_episodes.push((s, s + len));
    }
    let in_range = |v: &[(usize, usize)], i: usize| v.iter().any(|&(a, b)| i >= a && i < b);

    let mut buf = vec![0f32; n];
    if spec.noise_rms > 0.0 {
        let normal = Normal::new(0.0, spec.noise_rms).expect("finite sigma");
        for v in buf.iter_mut() {
            *v = normal.sample(&mut rng) as f32;
        }
    }

    let start_h = hours_of_day(start_time);
    let mut beats = Vec::new();
    let mut t = 0.4;
    let mut bigeminal_slot = false;
    let margin = (TEMPLATE_HALF_S * fs) as usize;
    loop {
        let r = (t * fs).round() as usize;
        if r >= n {
            break;
        }
        let mut rr = 60.0 / circadian_hr(spec, (start_h + t / 3600.0) % 24.0);
        let af = in_range(&af_episodes, r);
        if af {
            rr *= 1.0 + AF_RR_JITTER * (rng.random::<f64>() - 0.5) * 2.0;
        }
        if r + margin < n {
            add_beat(&mut buf, r, false, !af);
        }
        beats.push(Beat { r, pvc: false });
        if in_range(&bursts, r) {
            bigeminal_slot = !bigeminal_slot;
            if bigeminal_slot {
                let rv = ((t + PVC_COUPLING * rr) * fs).round() as usize;
                if rv + margin < n {
                    add_beat(&mut buf, rv, true, false);
                    beats.push(Beat { r: rv, pvc: true });
                }
                t += 2.0 * rr;
                continue;
            }
        } else {
            bigeminal_slot = false;
        }
        t += rr;
    }

    for &(a, b) in &af_episodes {
        let phase: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        for (k, v) in buf.iter_mut().enumerate().take(b).skip(a) {
            let tt = k as f64 / fs;
            *v += (AF_RIPPLE_UV * (2.0 * std::f64::consts::PI * AF_RIPPLE_HZ * tt + phase).sin()) as f32;
        }
    }

    let raw: Vec<i16> = buf.iter().map(|&v| EcgRecording::quantize(v as f64)).collect();
    drop(buf);
    Ok(Synthesized {
        recording: EcgRecording::from_raw(exam_id, patient_id, start_time, raw, n),
        truth: SynthTruth {
            bursts,
            af_episodes,
            beats,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::detect_r_peaks;
    use chrono::NaiveDate;

    fn start(h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2017, 9, 12).unwrap().and_hms_opt(h, 0, 0).unwrap()
    }

    fn short(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            duration_h: 20.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = SynthSpec {
            pvc_burst_rate: 0.3,
            af_episode_prob: 1.0,
            ..short(11)
        };
        let a = synthesize(&spec, "a", "p", start(9)).unwrap();
        let b = synthesize(&spec, "a", "p", start(9)).unwrap();
        assert_eq!(a.recording.raw, b.recording.raw);
        assert_eq!(a.truth, b.truth);
        let c = synthesize(&SynthSpec { seed: 12, ..spec }, "a", "p", start(9)).unwrap();
        assert_ne!(a.recording.raw, c.recording.raw);
    }

    #[test]
    fn clean_rhythm_is_periodic_within_circadian_envelope() {
        let spec = SynthSpec {
            noise_rms: 0.0,
            ..short(3)
        };
        let s = synthesize(&spec, "a", "p", start(8)).unwrap();
        let rec = &s.recording;
        // One hour from 10:00 (two hours in); RR must follow the circadian rate.
        let from = 2 * 3600 * FS;
        let x = rec.slice_uv(from, 3600 * FS);
        let peaks = detect_r_peaks(&x, FS as f64);
        let rr: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64 / FS as f64).collect();
        let lo = 60.0 / (spec.mean_hr + spec.hr_circadian_amp);
        let hi = 60.0 / (spec.mean_hr - spec.hr_circadian_amp);
        let one_sample = 1.0 / FS as f64;
        assert!(rr.iter().all(|&v| v >= lo - one_sample && v <= hi + one_sample));
        let mean = rr.iter().sum::<f64>() / rr.len() as f64;
        let sd = (rr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rr.len() as f64).sqrt();
        assert!(sd < 0.5 * (hi - lo) + one_sample, "rr sd {sd}");
        let expected = s.truth.beats.iter().filter(|b| b.r >= from && b.r < from + 3600 * FS).count();
        assert!((peaks.len() as i64 - expected as i64).abs() <= 1);
    }

    #[test]
    fn daytime_bias_one_keeps_bursts_between_seven_and_eight_pm() {
        for seed in 0..20 {
            let spec = SynthSpec {
                pvc_burst_rate: 0.5,
                pvc_burst_daytime_bias: 1.0,
                noise_rms: 0.0,
                ..short(seed)
            };
            let st = start(13);
            let s = synthesize(&spec, "a", "p", st).unwrap();
            assert_eq!(s.truth.bursts.len(), 10);
            for &(a, b) in &s.truth.bursts {
                for idx in [a, b - 1] {
                    let t = st + Duration::seconds((idx / FS) as i64);
                    let h = t.hour();
                    assert!((DAYTIME_START_H..DAYTIME_END_H).contains(&h), "burst at {t}");
                }
            }
        }
    }

    #[test]
    fn amplitudes_stay_in_range_and_pvcs_are_planted() {
        let spec = SynthSpec {
            pvc_burst_rate: 0.2,
            noise_rms: 4000.0,
            ..short(5)
        };
        let s = synthesize(&spec, "a", "p", start(0)).unwrap();
        assert!(s.recording.raw.iter().all(|v| v.abs() <= 2000));
        assert!(s.recording.raw.iter().any(|&v| v == 2000));
        let pvcs = s.truth.beats.iter().filter(|b| b.pvc).count();
        assert!(pvcs > 4 * 15 * 20, "{pvcs} pvcs");
        assert!(s.truth.beats.iter().filter(|b| b.pvc).all(|b| s.truth.in_burst(b.r) || s.truth.in_burst(b.r - 100)));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(synthesize(&SynthSpec { duration_h: 10.0, ..short(0) }, "a", "p", start(0)).is_err());
        assert!(synthesize(&SynthSpec { pvc_burst_rate: -1.0, ..short(0) }, "a", "p", start(0)).is_err());
    }
}
