//! Desk-scale synthetic cohorts: recordings with planted abnormalities, a
//! matching EMR, and labels produced by the regular labeling and split code.
//!
//! Future-HF patients carry daytime bigeminal PVC bursts; everyone else does
//! not. AF episodes appear in both classes as a distractor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{
    extract_endpoint, label_exams, split_cohort, write_labels, CohortError, Demographics, Emr, EmrEvent, EventKind,
    Exam, ExamLabel, Sex, Split,
};
use crate::sampling::derive_seed;
use crate::signal::{synthesize, write_recording, EcgRecording, SignalError, SynthSpec, SynthTruth};

#[derive(Debug, Error)]
pub enum SynthCohortError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("split sizes came out as {got:?}, expected {want:?}")]
    SplitSizes { got: [usize; 3], want: [usize; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Share of future-HF exams within each split.
    pub pos_frac: f64,
    /// PVC bursts per 24 h for future-HF recordings.
    pub bursts_per_day: f64,
    pub burst_minutes: f64,
    pub daytime_bias: f64,
    pub af_episode_prob: f64,
    pub noise_rms: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_train: 40,
            n_val: 10,
            n_test: 20,
            pos_frac: 0.5,
            bursts_per_day: 6.0,
            burst_minutes: 30.0,
            daytime_bias: 1.0,
            af_episode_prob: 0.2,
            noise_rms: 20.0,
        }
    }
}

impl CohortSpec {
    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    /// Recording parameters for one exam.
    pub fn synth_spec(&self, exam_id: &str, positive: bool) -> SynthSpec {
        let seed = derive_seed(self.seed, exam_id, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SynthSpec {
            seed,
            duration_h: 24.0,
            mean_hr: rng.random_range(62.0..78.0),
            hr_circadian_amp: rng.random_range(5.0..10.0),
            pvc_burst_rate: if positive { self.bursts_per_day / 24.0 } else { 0.0 },
            pvc_burst_daytime_bias: self.daytime_bias,
            af_episode_prob: self.af_episode_prob,
            noise_rms: self.noise_rms,
            burst_minutes: self.burst_minutes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub spec: CohortSpec,
    pub exams: Vec<Exam>,
    pub labels: Vec<ExamLabel>,
    pub emr: Emr,
    pub recordings: BTreeMap<String, EcgRecording>,
    pub truths: BTreeMap<String, SynthTruth>,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

fn random_date(rng: &mut impl Rng, lo: NaiveDate, hi: NaiveDate) -> NaiveDate {
    lo + Duration::days(rng.random_range(0..=(hi - lo).num_days()))
}

/// Exams only: ids, patients and dates. Test exams fall in Jan–Apr 2018, the
/// rest in 2012–2017.
pub fn synthetic_exams(spec: &CohortSpec) -> Vec<Exam> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "exams", 0));
    let width = spec.total().to_string().len().max(3);
    (0..spec.total())
        .map(|i| {
            let d = if i < spec.n_test {
                random_date(&mut rng, date(2018, 1, 2), date(2018, 4, 29))
            } else {
                random_date(&mut rng, date(2012, 1, 1), date(2017, 11, 30))
            };
            Exam::new(&format!("ex{i:0width$}"), &format!("pt{i:0width$}"), d)
        })
        .collect()
}

fn push_value(emr: &mut Emr, pid: &str, kind: EventKind, name: &str, v: f64, d: NaiveDate) {
    emr.push(EmrEvent::valued(pid, kind, name, (v * 10.0).round() / 10.0, d));
}

fn z(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("sigma").sample(rng)
}

/// Clinical history for one patient. Future-HF patients get a worse risk
/// profile on average, an HF diagnosis, and follow-up echo and treatment.
fn synth_emr(emr: &mut Emr, exam: &Exam, endpoint: Option<NaiveDate>, rng: &mut ChaCha8Rng) {
    let pid = exam.patient_id.as_str();
    let d = exam.exam_date;
    let hf = endpoint.is_some();
    let shift = if hf { 1.0 } else { 0.0 };
    let age: f64 = (62.0 + 6.0 * shift + 9.0 * z(rng)).clamp(35.0, 85.0);
    let sex = if z(rng) > 0.0 { Sex::Male } else { Sex::Female };
    let smoker = z(rng) + 0.4 * shift > 0.6;
    emr.demographics.insert(
        pid.to_string(),
        Demographics {
            patient_id: pid.to_string(),
            sex,
            birth_year: (d.format("%Y").to_string().parse::<f64>().expect("year") - age).round() as i32,
            smoker,
        },
    );
    let sbp: f64 = 128.0 + 8.0 * shift + 14.0 * z(rng);
    let bmi: f64 = 27.0 + 1.5 * shift + 4.0 * z(rng);
    let glucose: f64 = 100.0 + 10.0 * shift + 18.0 * z(rng);
    let chol: f64 = 190.0 + 30.0 * z(rng);
    let hdl: f64 = 50.0 - 3.0 * shift + 10.0 * z(rng);
    let before = |days: i64| d - Duration::days(days);
    push_value(emr, pid, EventKind::Measure, "sbp", sbp.max(90.0), before(rng.random_range(-40..500)));
    push_value(emr, pid, EventKind::Measure, "sbp", (sbp + 6.0 * z(rng)).max(90.0), before(rng.random_range(500..700)));
    push_value(emr, pid, EventKind::Measure, "bmi", bmi.max(17.0), before(rng.random_range(0..600)));
    push_value(emr, pid, EventKind::Lab, "glucose", glucose.max(60.0), before(rng.random_range(0..600)));
    push_value(emr, pid, EventKind::Lab, "total_chol", chol.max(100.0), before(rng.random_range(0..600)));
    push_value(emr, pid, EventKind::Lab, "hdl", hdl.max(20.0), before(rng.random_range(0..600)));

    let htn = sbp > 140.0 || z(rng) + 0.5 * shift > 0.8;
    if htn {
        emr.push(EmrEvent::diagnosis(pid, "401.9", before(rng.random_range(200..2000))));
        emr.push(EmrEvent::medication(pid, "C09AA02", before(rng.random_range(30..300))));
    }
    if glucose > 126.0 {
        emr.push(EmrEvent::diagnosis(pid, "250.00", before(rng.random_range(200..2000))));
        emr.push(EmrEvent::medication(pid, "A10BA02", before(rng.random_range(30..300))));
    }
    if z(rng) + 0.5 * shift > 1.0 {
        emr.push(EmrEvent::diagnosis(pid, "414.01", before(rng.random_range(100..2000))));
    }
    if let Some(dx) = endpoint {
        emr.push(EmrEvent {
            source: Some(crate::cohort::Source::Hospital),
            ..EmrEvent::diagnosis(pid, "428.0", dx)
        });
        emr.push(EmrEvent::diagnosis(pid, "428.0", dx + Duration::days(rng.random_range(30..200))));
        emr.push(EmrEvent::new(pid, EventKind::Echo, "", dx + Duration::days(rng.random_range(-20..200))));
        emr.push(EmrEvent::medication(pid, "C07AB07", dx + Duration::days(rng.random_range(0..120))));
        emr.push(EmrEvent::medication(pid, "C03CA01", dx + Duration::days(rng.random_range(0..60))));
        emr.push(EmrEvent::new(pid, EventKind::Admission, "cardiology", dx));
        if rng.random::<f64>() < 0.3 {
            emr.push(EmrEvent::new(pid, EventKind::Death, "", dx + Duration::days(rng.random_range(100..1500))));
        }
    } else if rng.random::<f64>() < 0.08 {
        emr.push(EmrEvent::new(pid, EventKind::Death, "", d + Duration::days(rng.random_range(300..3000))));
    }
    emr.push(EmrEvent::new(pid, EventKind::Admission, "internal", d + Duration::days(rng.random_range(10..2500))));
}

/// Builds the cohort in memory. Recording synthesis dominates the cost
/// (roughly 22 MB and a second or two per exam).
pub fn build_cohort(spec: &CohortSpec) -> Result<SyntheticCohort, SynthCohortError> {
    let exams = synthetic_exams(spec);
    let val_frac = if spec.n_val == 0 {
        0.0
    } else {
        spec.n_val as f64 / (spec.n_train + spec.n_val) as f64
    };
    // Splits do not depend on labels, so split first and balance classes inside each split.
    let provisional = split_cohort(&label_exams(&exams, &BTreeMap::new()), val_frac, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "classes", 0));
    let mut positive: BTreeMap<String, bool> = BTreeMap::new();
    for split in [Split::Train, Split::Validation, Split::Test] {
        let mut ids: Vec<&str> = provisional
            .iter()
            .filter(|l| l.split == Some(split))
            .map(|l| l.exam_id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let n_pos = (spec.pos_frac * ids.len() as f64).round() as usize;
        for (k, id) in ids.iter().enumerate() {
            positive.insert(id.to_string(), k < n_pos);
        }
    }

    let mut emr = Emr::default();
    for e in &exams {
        let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &e.patient_id, 1));
        let endpoint = positive[&e.exam_id].then(|| e.exam_date + Duration::days(prng.random_range(30..=1800)));
        synth_emr(&mut emr, e, endpoint, &mut prng);
    }
    emr.sort();
    let endpoints: BTreeMap<String, NaiveDate> = emr
        .timelines
        .iter()
        .filter_map(|(p, t)| extract_endpoint(t).map(|d| (p.clone(), d)))
        .collect();
    let labels = split_cohort(&label_exams(&exams, &endpoints), val_frac, spec.seed)?;
    let count = |s: Split| labels.iter().filter(|l| l.split == Some(s)).count();
    let got = [count(Split::Train), count(Split::Validation), count(Split::Test)];
    let want = [spec.n_train, spec.n_val, spec.n_test];
    if got != want {
        return Err(SynthCohortError::SplitSizes { got, want });
    }

    let mut recordings = BTreeMap::new();
    let mut truths = BTreeMap::new();
    for e in &exams {
        let s = spec.synth_spec(&e.exam_id, positive[&e.exam_id]);
        let mut trng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x5eed);
        let minutes = trng.random_range(7 * 60..=11 * 60);
        let start = NaiveDateTime::new(e.exam_date, NaiveTime::from_hms_opt(0, 0, 0).expect("midnight"))
            + Duration::minutes(minutes);
        let out = synthesize(&s, &e.exam_id, &e.patient_id, start)?;
        recordings.insert(e.exam_id.clone(), out.recording);
        truths.insert(e.exam_id.clone(), out.truth);
    }
    Ok(SyntheticCohort {
        spec: spec.clone(),
        exams,
        labels,
        emr,
        recordings,
        truths,
    })
}

impl SyntheticCohort {
    pub fn split(&self, s: Split) -> Vec<&ExamLabel> {
        self.labels.iter().filter(|l| l.split == Some(s)).collect()
    }

    /// Writes `recordings/`, `emr/`, `labels.jsonl` and `truth.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthCohortError> {
        let io = |p: &Path, e: std::io::Error| SynthCohortError::Io {
            path: p.display().to_string(),
            reason: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for rec in self.recordings.values() {
            write_recording(&dir.join("recordings"), rec)?;
        }
        self.emr.write_dir(&dir.join("emr"))?;
        write_labels(&dir.join("labels.jsonl"), &self.labels)?;
        let truth = dir.join("truth.json");
        let text = serde_json::to_string(&self.truths).expect("truth serializes");
        fs::write(&truth, text).map_err(|e| io(&truth, e))
    }
}
