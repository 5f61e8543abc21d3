//! Window sampling plans over a normalized 24-hour recording.
//!
//! Step 1 draws one random 30 s window inside each 3-minute segment (fresh
//! draw every epoch); step 2 takes one 30 s window every 2 minutes at a single
//! per-recording offset, so sequence position `i` maps to wall-clock
//! `start + i·2 min + c/fs`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::signal::{EcgRecording, DAY_SAMPLES, FS};

pub const WINDOW_LEN: usize = 30 * FS;
pub const STEP1_SEGMENT: usize = 3 * 60 * FS;
pub const STEP2_SEGMENT: usize = 2 * 60 * FS;
pub const STEP1_WINDOWS: usize = DAY_SAMPLES / STEP1_SEGMENT;
pub const STEP2_WINDOWS: usize = DAY_SAMPLES / STEP2_SEGMENT;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("window at offset {offset} (len {window_len}) exceeds recording of {len} samples")]
    OffsetOutOfRange {
        offset: usize,
        window_len: usize,
        len: usize,
    },
    #[error("segment of {segment} samples cannot hold a {window_len}-sample window")]
    BadSegment { segment: usize, window_len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Step1Random,
    Step2Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub exam_id: String,
    pub window_len: usize,
    pub offsets: Vec<usize>,
    pub mode: PlanMode,
}

/// Deterministic 64-bit seed from the global seed, an exam id and an epoch.
pub fn derive_seed(global_seed: u64, exam_id: &str, epoch: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update((exam_id.len() as u64).to_le_bytes());
    h.update(exam_id.as_bytes());
    h.update(epoch.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// One uniformly random window per 3-minute segment.
pub fn plan_step1(exam_id: &str, seed: u64) -> WindowPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = STEP1_SEGMENT - WINDOW_LEN;
    let offsets = (0..STEP1_WINDOWS)
        .map(|i| i * STEP1_SEGMENT + rng.random_range(0..=span))
        .collect();
    WindowPlan {
        exam_id: exam_id.to_string(),
        window_len: WINDOW_LEN,
        offsets,
        mode: PlanMode::Step1Random,
    }
}

/// Random constant offset `c`, drawn once, then one window every 2 minutes.
pub fn plan_step2(exam_id: &str, seed: u64) -> WindowPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(0..=STEP2_SEGMENT - WINDOW_LEN);
    plan_step2_at(exam_id, c)
}

/// Step-2 plan with an explicit offset; `c = 0` is the canonical inference grid.
pub fn plan_step2_at(exam_id: &str, c: usize) -> WindowPlan {
    assert!(c <= STEP2_SEGMENT - WINDOW_LEN, "offset {c} leaves the segment");
    WindowPlan {
        exam_id: exam_id.to_string(),
        window_len: WINDOW_LEN,
        offsets: (0..STEP2_WINDOWS).map(|i| i * STEP2_SEGMENT + c).collect(),
        mode: PlanMode::Step2Fixed,
    }
}

/// Step-2 style plan with a configurable segment length.
pub fn plan_fixed_grid(exam_id: &str, segment: usize, c: usize) -> Result<WindowPlan, SamplingError> {
    if segment < WINDOW_LEN || c > segment - WINDOW_LEN {
        return Err(SamplingError::BadSegment {
            segment,
            window_len: WINDOW_LEN,
        });
    }
    Ok(WindowPlan {
        exam_id: exam_id.to_string(),
        window_len: WINDOW_LEN,
        offsets: (0..DAY_SAMPLES / segment).map(|i| i * segment + c).collect(),
        mode: PlanMode::Step2Fixed,
    })
}

/// Gathered windows, `n × window_len` row-major, in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub window_len: usize,
    pub data: Vec<f32>,
    /// `true` for windows lying entirely inside zero padding.
    pub masked: Vec<bool>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.window_len..(i + 1) * self.window_len]
    }

    pub fn valid(&self) -> Vec<bool> {
        self.masked.iter().map(|m| !m).collect()
    }
}

pub fn gather(rec: &EcgRecording, plan: &WindowPlan) -> Result<WindowBatch, SamplingError> {
    let w = plan.window_len;
    let mut data = Vec::with_capacity(plan.offsets.len() * w);
    let mut masked = Vec::with_capacity(plan.offsets.len());
    for &off in &plan.offsets {
        if off + w > rec.len() {
            return Err(SamplingError::OffsetOutOfRange {
                offset: off,
                window_len: w,
                len: rec.len(),
            });
        }
        data.extend(rec.raw[off..off + w].iter().map(|&r| EcgRecording::to_uv(r) as f32));
        masked.push(off >= rec.valid_len);
    }
    Ok(WindowBatch {
        window_len: w,
        data,
        masked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    #[test]
    fn constants_match_day_layout() {
        assert_eq!(WINDOW_LEN, 3840);
        assert_eq!(STEP1_SEGMENT, 23_040);
        assert_eq!(STEP2_SEGMENT, 15_360);
        assert_eq!(STEP1_WINDOWS, 480);
        assert_eq!(STEP2_WINDOWS, 720);
    }

    #[test]
    fn first_segment_bounds() {
        for s in 0..200 {
            let p = plan_step1("e", s);
            assert!(p.offsets[0] <= 19_200);
        }
    }

    #[test]
    fn epochs_redraw_offsets() {
        let a = plan_step1("e", derive_seed(3, "e", 0));
        let b = plan_step1("e", derive_seed(3, "e", 1));
        assert_ne!(a.offsets, b.offsets);
        assert_ne!(derive_seed(3, "e1", 0), derive_seed(3, "e", 10));
    }

    #[test]
    fn canonical_grid_starts_at_zero() {
        let p = plan_step2_at("e", 0);
        assert_eq!(&p.offsets[..3], &[0, 15_360, 30_720]);
    }

    #[test]
    fn gather_flags_padding_windows() {
        let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(8, 0, 0).unwrap();
        let mut raw = vec![4i16; DAY_SAMPLES];
        let valid_len = DAY_SAMPLES - 2 * STEP2_SEGMENT;
        raw[valid_len..].iter_mut().for_each(|v| *v = 0);
        let rec = EcgRecording::from_raw("e", "p", start, raw, valid_len);
        let plan = plan_step2_at("e", 0);
        let b = gather(&rec, &plan).unwrap();
        assert_eq!(b.len(), 720);
        assert_eq!(b.data.len(), 720 * 3840);
        assert!(b.masked[718] && b.masked[719] && !b.masked[717]);
        assert!(b.row(719).iter().all(|&v| v == 0.0));
        assert_eq!(b.row(0)[0], 10.0);
        assert_eq!(gather(&rec, &plan).unwrap(), b);

        let bad = WindowPlan {
            offsets: vec![DAY_SAMPLES - 100],
            ..plan
        };
        assert!(matches!(
            gather(&rec, &bad),
            Err(SamplingError::OffsetOutOfRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn step1_offsets_stay_in_their_segment(seed in any::<u64>()) {
            let p = plan_step1("x", seed);
            prop_assert_eq!(p.offsets.len(), STEP1_WINDOWS);
            for (i, &o) in p.offsets.iter().enumerate() {
                prop_assert!(o >= i * STEP1_SEGMENT);
                prop_assert!(o + WINDOW_LEN <= (i + 1) * STEP1_SEGMENT);
            }
        }

        #[test]
        fn step2_has_constant_stride(seed in any::<u64>()) {
            let p = plan_step2("x", seed);
            prop_assert_eq!(p.offsets.len(), STEP2_WINDOWS);
            prop_assert!(p.offsets[0] <= STEP2_SEGMENT - WINDOW_LEN);
            for w in p.offsets.windows(2) {
                prop_assert_eq!(w[1] - w[0], STEP2_SEGMENT);
            }
            prop_assert!(*p.offsets.last().unwrap() + WINDOW_LEN <= DAY_SAMPLES);
        }
    }
}
