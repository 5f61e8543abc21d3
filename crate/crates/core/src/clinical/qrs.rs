use super::ClinicalError;
use crate::signal::filter::{filtfilt, Biquad};
use crate::signal::peaks::detect_r_peaks;
use crate::signal::{EcgRecording, FS};

/// Measurement slice: the first five minutes of the twelfth hour.
pub const QRS_SLICE_START: usize = 11 * 3600 * FS;
pub const QRS_SLICE_LEN: usize = 5 * 60 * FS;
const MIN_VALID: usize = 12 * 3600 * FS;
/// Samples searched on either side of R for the QRS boundaries (about 150 ms).
const SEARCH: usize = 19;
/// Share of the beat's steepest slope that still counts as inside the QRS.
const SLOPE_FRAC: f64 = 0.3;

/// QRS onset and offset around `r` (inclusive sample indices) from a
/// central-difference slope: walk outward from R while the slope magnitude
/// stays above a fraction of the beat's maximum.
pub fn delineate(x: &[f64], r: usize) -> Option<(usize, usize)> {
    if r < SEARCH + 1 || r + SEARCH + 1 >= x.len() {
        return None;
    }
    let slope = |i: usize| 0.5 * (x[i + 1] - x[i - 1]);
    let peak = (r - SEARCH..=r + SEARCH).map(|i| slope(i).abs()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let thr = SLOPE_FRAC * peak;
    let mut on = r;
    while on > r - SEARCH && slope(on - 1).abs() >= thr {
        on -= 1;
    }
    let mut off = r;
    while off < r + SEARCH && slope(off + 1).abs() >= thr {
        off += 1;
    }
    Some((on, off))
}

/// Mean QRS duration in ms over beats in the measurement slice.
pub fn measure_qrs(rec: &EcgRecording) -> Result<f64, ClinicalError> {
    if rec.valid_len < MIN_VALID {
        return Err(ClinicalError::InsufficientValidData {
            hours: rec.valid_hours(),
        });
    }
    let raw = rec.slice_uv(QRS_SLICE_START, QRS_SLICE_LEN);
    let x = filtfilt(&[Biquad::highpass(0.5, FS as f64)], &raw);
    let widths: Vec<f64> = detect_r_peaks(&x, FS as f64)
        .into_iter()
        .filter_map(|r| delineate(&x, r))
        .map(|(on, off)| (off - on) as f64)
        .collect();
    if widths.is_empty() {
        return Err(ClinicalError::NoBeatsDetected);
    }
    Ok(widths.iter().sum::<f64>() / widths.len() as f64 * 1000.0 / FS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::synth::SINUS_QRS_SAMPLES;
    use crate::signal::{synthesize, SynthSpec};
    use chrono::NaiveDateTime;

    fn start() -> NaiveDateTime {
        NaiveDateTime::parse_from_str("2018-02-01 09:00", "%Y-%m-%d %H:%M").unwrap()
    }

    fn sinus(hours: f64) -> EcgRecording {
        let spec = SynthSpec {
            duration_h: 20.0,
            pvc_burst_rate: 0.0,
            af_episode_prob: 0.0,
            ..SynthSpec::default()
        };
        let mut rec = synthesize(&spec, "q", "p", start()).unwrap().recording;
        let n = (hours * 3600.0) as usize * FS;
        rec.raw.truncate(n);
        rec.valid_len = n;
        rec
    }

    #[test]
    fn template_width_is_recovered() {
        let ms = measure_qrs(&sinus(12.5)).unwrap();
        let want = SINUS_QRS_SAMPLES as f64 * 1000.0 / FS as f64;
        assert!((ms - want).abs() <= 1000.0 / FS as f64, "{ms} vs {want}");
    }

    #[test]
    fn amplitude_scaling_does_not_change_the_measurement() {
        let rec = sinus(12.2);
        let base = measure_qrs(&rec).unwrap();
        for k in [0.5, 2.0] {
            let uv: Vec<f64> = (0..rec.len()).map(|i| rec.uv(i) * k).collect();
            let scaled = EcgRecording::from_uv("q", "p", rec.start_time, &uv);
            let ms = measure_qrs(&scaled).unwrap();
            assert!((ms - base).abs() < 0.5, "{k}: {ms} vs {base}");
        }
    }

    #[test]
    fn short_or_flat_recordings_fail() {
        assert!(matches!(
            measure_qrs(&sinus(10.0)),
            Err(ClinicalError::InsufficientValidData { .. })
        ));
        let flat = EcgRecording::from_uv("f", "p", start(), &vec![0.0; 12 * 3600 * FS]);
        assert!(matches!(measure_qrs(&flat), Err(ClinicalError::NoBeatsDetected)));
    }
}
