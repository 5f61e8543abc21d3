use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{AttentionProfile, ExplainError};
use crate::sampling::STEP2_SEGMENT;
use crate::signal::peaks::detect_r_peaks;
use crate::signal::{EcgRecording, FS};

/// Samples kept on each side of an R peak.
pub const BEAT_HALF: usize = 50;
pub const BEAT_LEN: usize = 2 * BEAT_HALF;
/// The leading 10 s of each selected window.
pub const SEGMENT_SAMPLES: usize = 10 * FS;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeatSource {
    pub exam_id: String,
    pub position: usize,
    /// R peak as an index into the recording.
    pub r_sample: usize,
}

/// Row-major `rows × BEAT_LEN` beats in µV with their origin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeatMatrix {
    pub data: Vec<f64>,
    pub sources: Vec<BeatSource>,
}

impl BeatMatrix {
    pub fn rows(&self) -> usize {
        self.sources.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * BEAT_LEN..(i + 1) * BEAT_LEN]
    }

    pub fn append(&mut self, other: BeatMatrix) {
        self.data.extend(other.data);
        self.sources.extend(other.sources);
    }

    /// Raw little-endian f64 blob plus a text manifest next to it.
    pub fn write(&self, blob: &Path, manifest: &Path) -> Result<(), ExplainError> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(blob, bytes).map_err(|e| ExplainError::io(blob, e))?;
        let name = blob.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let mut text = format!(
            "blob = {name}\ndtype = f64-le\nunit = uV\nrows = {}\ncols = {BEAT_LEN}\n# row exam_id position r_sample\n",
            self.rows()
        );
        for (i, s) in self.sources.iter().enumerate() {
            text.push_str(&format!("{i} {} {} {}\n", s.exam_id, s.position, s.r_sample));
        }
        fs::write(manifest, text).map_err(|e| ExplainError::io(manifest, e))
    }
}

/// Valid positions whose final mass survives discarding the lowest
/// `discard_ratio` share of valid positions.
pub fn high_attention_positions(profile: &AttentionProfile, discard_ratio: f64) -> Vec<usize> {
    let mut vals: Vec<f64> = profile
        .mass
        .iter()
        .zip(&profile.valid)
        .filter(|(_, &v)| v)
        .map(|(&m, _)| m)
        .collect();
    let n_drop = (discard_ratio * vals.len() as f64).floor() as usize;
    let cut = if n_drop == 0 {
        f64::NEG_INFINITY
    } else {
        *vals.select_nth_unstable_by(n_drop - 1, f64::total_cmp).1
    };
    (0..profile.mass.len())
        .filter(|&i| profile.valid[i] && profile.mass[i] > cut)
        .collect()
}

/// Beats centered on each detected R peak; peaks closer than `BEAT_HALF`
/// samples to either end of the segment are dropped. Returns `(r, beat)`.
pub fn beats_from_segment(seg: &[f64]) -> Vec<(usize, Vec<f64>)> {
    detect_r_peaks(seg, FS as f64)
        .into_iter()
        .filter(|&r| r >= BEAT_HALF && r + BEAT_HALF <= seg.len())
        .map(|r| (r, seg[r - BEAT_HALF..r + BEAT_HALF].to_vec()))
        .collect()
}

/// Beats from the first 10 s of each listed position on the canonical grid.
pub fn extract_beats(rec: &EcgRecording, positions: &[usize]) -> Result<BeatMatrix, ExplainError> {
    let mut out = BeatMatrix::default();
    for &pos in positions {
        let start = pos * STEP2_SEGMENT;
        if start + SEGMENT_SAMPLES > rec.valid_len {
            continue;
        }
        for (r, beat) in beats_from_segment(&rec.slice_uv(start, SEGMENT_SAMPLES)) {
            out.data.extend(beat);
            out.sources.push(BeatSource {
                exam_id: rec.exam_id.clone(),
                position: pos,
                r_sample: start + r,
            });
        }
    }
    if out.rows() == 0 {
        return Err(ExplainError::NoBeatsFound);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDateTime;

    /// 10 s at 60 bpm with narrow triangular QRS complexes at 0.5 s + k s.
    fn sinus_60() -> Vec<f64> {
        let mut x = vec![0.0; SEGMENT_SAMPLES];
        for k in 0..10 {
            let r = FS / 2 + k * FS;
            for d in 0..6usize {
                let a = 1000.0 * (1.0 - d as f64 / 6.0);
                x[r + d] = a;
                if d > 0 {
                    x[r - d] = a;
                }
            }
        }
        x
    }

    #[test]
    fn clean_sinus_yields_beats() {
        let beats = beats_from_segment(&sinus_60());
        assert!(beats.len() >= 8, "{}", beats.len());
        assert!(beats.iter().all(|(_, b)| b.len() == BEAT_LEN));
        for (r, b) in &beats {
            assert!((*r as i64 - (FS as i64 / 2)) % FS as i64 <= 1);
            assert_eq!(b[BEAT_HALF], 1000.0);
        }
    }

    #[test]
    fn flat_line_has_no_beats() {
        let t = NaiveDateTime::parse_from_str("2018-01-01 08:00", "%Y-%m-%d %H:%M").unwrap();
        let rec = EcgRecording::from_uv("x", "p", t, &vec![0.0; 3 * STEP2_SEGMENT]);
        assert!(matches!(extract_beats(&rec, &[0, 1]), Err(ExplainError::NoBeatsFound)));
    }

    #[test]
    fn positions_above_the_discard_cut() {
        let mut mass = vec![0.0; 20];
        mass[3] = 0.5;
        mass[7] = 0.3;
        mass[8] = 0.2;
        let mut valid = vec![true; 20];
        valid[19] = false;
        let p = AttentionProfile {
            exam_id: "x".into(),
            start_time: NaiveDateTime::default(),
            mass,
            valid,
        };
        assert_eq!(high_attention_positions(&p, 0.9), vec![3, 7]);
        assert_eq!(high_attention_positions(&p, 0.0).len(), 19);
    }
}
