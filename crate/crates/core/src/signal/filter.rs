//! Second-order IIR sections and zero-phase filtering.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn from_rbj(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Butterworth low-pass (Q = 1/√2).
    pub fn lowpass(cutoff_hz: f64, fs: f64) -> Self {
        let w = 2.0 * PI * cutoff_hz / fs;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * FRAC_1_SQRT_2);
        Self::from_rbj(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    /// Butterworth high-pass (Q = 1/√2).
    pub fn highpass(cutoff_hz: f64, fs: f64) -> Self {
        let w = 2.0 * PI * cutoff_hz / fs;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * FRAC_1_SQRT_2);
        Self::from_rbj(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    /// Direct form II transposed, starting from rest.
    pub fn apply(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + z1;
            z1 = self.b[1] * *v - self.a[0] * y + z2;
            z2 = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }

    /// Magnitude response at `f` Hz.
    pub fn gain(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            self.b[1] * z1.1 + self.b[2] * z2.1,
        );
        let den = (1.0 + self.a[0] * z1.0 + self.a[1] * z2.0, self.a[0] * z1.1 + self.a[1] * z2.1);
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Forward-backward application of a cascade, with odd reflection padding at
/// both ends to limit start-up transients.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = (n - 1).min(3 * 64);
    let mut buf = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        buf.push(2.0 * x[0] - x[i]);
    }
    buf.extend_from_slice(x);
    for i in 1..=pad {
        buf.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    for s in sections {
        s.apply(&mut buf);
    }
    buf.reverse();
    for s in sections {
        s.apply(&mut buf);
    }
    buf.reverse();
    buf[pad..pad + n].to_vec()
}

/// Zero-phase band-pass made of one high-pass and one low-pass section.
pub fn bandpass(x: &[f64], lo_hz: f64, hi_hz: f64, fs: f64) -> Vec<f64> {
    filtfilt(&[Biquad::highpass(lo_hz, fs), Biquad::lowpass(hi_hz, fs)], x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn butterworth_is_minus_three_db_at_cutoff() {
        let lp = Biquad::lowpass(15.0, 128.0);
        let hp = Biquad::highpass(5.0, 128.0);
        assert_relative_eq!(lp.gain(15.0, 128.0), FRAC_1_SQRT_2, epsilon = 1e-9);
        assert_relative_eq!(hp.gain(5.0, 128.0), FRAC_1_SQRT_2, epsilon = 1e-9);
        assert_relative_eq!(lp.gain(0.0, 128.0), 1.0, epsilon = 1e-12);
        assert!(hp.gain(0.0, 128.0) < 1e-12);
    }

    #[test]
    fn bandpass_removes_offset_and_keeps_phase() {
        let fs = 128.0;
        let x: Vec<f64> = (0..2048)
            .map(|i| 500.0 + (2.0 * PI * 10.0 * i as f64 / fs).sin())
            .collect();
        let y = bandpass(&x, 5.0, 15.0, fs);
        // Away from the edges the 10 Hz tone survives in phase and the DC is gone.
        let mid = &y[512..1536];
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!(mean.abs() < 1e-2);
        let peak = mid.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.7 && peak < 1.1);
        let phase_err: f64 = (512..1536)
            .map(|i| (y[i] / peak - (2.0 * PI * 10.0 * i as f64 / fs).sin()).abs())
            .fold(0.0, f64::max);
        assert!(phase_err < 0.05, "phase error {phase_err}");
    }
}
