//! Single-lead Holter recordings: storage, container I/O, duration
//! normalization, synthesis, filtering and R-peak detection.

pub mod container;
pub mod filter;
pub mod peaks;
pub mod synth;

use chrono::NaiveDateTime;
use thiserror::Error;

pub use container::{list_recordings, read_header, read_recording, write_recording, RecordingHeader};
pub use peaks::detect_r_peaks;
pub use synth::{synthesize, SynthSpec, SynthTruth, Synthesized};

pub const FS: usize = 128;
/// Microvolts per stored least-significant bit.
pub const SCALE_UV_PER_LSB: f64 = 2.5;
/// Largest representable amplitude (±5 mV).
pub const MAX_ABS_UV: f64 = 5000.0;
pub const MAX_ABS_LSB: i16 = 2000;
pub const DAY_SAMPLES: usize = 24 * 3600 * FS;
pub const MIN_SAMPLES: usize = 20 * 3600 * FS;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("corrupt header {path}: {reason}")]
    CorruptHeader { path: String, reason: String },
    #[error("sample blob holds {actual} samples, header declares {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("sample rate {0} Hz is not supported (expected 128)")]
    BadSampleRate(u32),
    #[error("recording has {valid} valid samples, below the {min}-sample minimum")]
    TooShort { valid: usize, min: usize },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One recording, stored as quantized 16-bit samples at 2.5 µV/LSB.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecording {
    pub exam_id: String,
    pub patient_id: String,
    pub start_time: NaiveDateTime,
    pub fs: u32,
    pub raw: Vec<i16>,
    /// Samples before this index are real signal; the rest is padding.
    pub valid_len: usize,
}

impl EcgRecording {
    pub fn from_raw(
        exam_id: impl Into<String>,
        patient_id: impl Into<String>,
        start_time: NaiveDateTime,
        raw: Vec<i16>,
        valid_len: usize,
    ) -> Self {
        assert!(valid_len <= raw.len());
        Self {
            exam_id: exam_id.into(),
            patient_id: patient_id.into(),
            start_time,
            fs: FS as u32,
            raw,
            valid_len,
        }
    }

    /// Quantizes microvolt samples, clipping at ±5000 µV.
    pub fn from_uv(
        exam_id: impl Into<String>,
        patient_id: impl Into<String>,
        start_time: NaiveDateTime,
        uv: &[f64],
    ) -> Self {
        let raw: Vec<i16> = uv.iter().map(|&v| Self::quantize(v)).collect();
        let n = raw.len();
        Self::from_raw(exam_id, patient_id, start_time, raw, n)
    }

    #[inline]
    pub fn quantize(uv: f64) -> i16 {
        if uv.is_nan() {
            return 0;
        }
        let lsb = (uv / SCALE_UV_PER_LSB).round();
        lsb.clamp(-(MAX_ABS_LSB as f64), MAX_ABS_LSB as f64) as i16
    }

    #[inline]
    pub fn to_uv(raw: i16) -> f64 {
        raw as f64 * SCALE_UV_PER_LSB
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn uv(&self, i: usize) -> f64 {
        Self::to_uv(self.raw[i])
    }

    /// Microvolt copy of `[start, start + len)`.
    pub fn slice_uv(&self, start: usize, len: usize) -> Vec<f64> {
        self.raw[start..start + len].iter().map(|&r| Self::to_uv(r)).collect()
    }

    pub fn valid_hours(&self) -> f64 {
        self.valid_len as f64 / (3600 * FS) as f64
    }
}

/// Trims (keeping the head) or zero-pads at the end to exactly 24 hours.
pub fn normalize_duration(mut rec: EcgRecording) -> Result<EcgRecording, SignalError> {
    if rec.valid_len < MIN_SAMPLES {
        return Err(SignalError::TooShort {
            valid: rec.valid_len,
            min: MIN_SAMPLES,
        });
    }
    rec.raw.resize(DAY_SAMPLES, 0);
    rec.valid_len = rec.valid_len.min(DAY_SAMPLES);
    rec.raw[rec.valid_len..].iter_mut().for_each(|v| *v = 0);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2016, 5, 1).unwrap().and_hms_opt(9, 30, 0).unwrap()
    }

    fn ramp(n: usize) -> EcgRecording {
        let raw = (0..n).map(|i| (i % 3000) as i16 - 1500).collect();
        EcgRecording::from_raw("e", "p", t0(), raw, n)
    }

    #[test]
    fn quantization_clips_instead_of_wrapping() {
        assert_eq!(EcgRecording::quantize(5000.0), 2000);
        assert_eq!(EcgRecording::quantize(7000.0), 2000);
        assert_eq!(EcgRecording::quantize(-1e9), -2000);
        assert_eq!(EcgRecording::quantize(2.4), 1);
        assert_eq!(EcgRecording::to_uv(2000), 5000.0);
    }

    #[test]
    fn long_recordings_keep_their_first_day() {
        let n = (24.67 * 3600.0 * FS as f64) as usize;
        let rec = ramp(n);
        let out = normalize_duration(rec.clone()).unwrap();
        assert_eq!(out.len(), DAY_SAMPLES);
        assert_eq!(out.valid_len, DAY_SAMPLES);
        assert_eq!(&out.raw[..], &rec.raw[..DAY_SAMPLES]);
    }

    #[test]
    fn exact_day_is_unchanged() {
        let rec = ramp(DAY_SAMPLES);
        assert_eq!(normalize_duration(rec.clone()).unwrap(), rec);
    }

    #[test]
    fn twenty_hours_are_zero_padded() {
        let rec = ramp(MIN_SAMPLES);
        let out = normalize_duration(rec).unwrap();
        assert_eq!(out.len(), DAY_SAMPLES);
        assert_eq!(out.valid_len, MIN_SAMPLES);
        let zeros = out.raw.iter().rev().take_while(|&&v| v == 0).count();
        assert!(zeros >= DAY_SAMPLES - MIN_SAMPLES);
        assert!(out.raw[MIN_SAMPLES..].iter().all(|&v| v == 0));
        let again = normalize_duration(out.clone()).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn under_twenty_hours_is_rejected() {
        assert!(matches!(
            normalize_duration(ramp(MIN_SAMPLES - 1)),
            Err(SignalError::TooShort { .. })
        ));
    }
}
