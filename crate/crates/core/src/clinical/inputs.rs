use chrono::{Datelike, Months, NaiveDate};

use super::{ClinicalError, PcphfInputs};
use crate::cohort::{Demographics, EmrEvent, EventKind};

pub const ANTIHYPERTENSIVE_ATC: [&str; 5] = ["C02", "C03", "C07", "C08", "C09"];
pub const GLUCOSE_LOWERING_ATC: [&str; 1] = ["A10"];

/// `[exam − 2 years, exam + 2 months]`.
pub fn lookup_window(exam: NaiveDate) -> (NaiveDate, NaiveDate) {
    (
        exam.checked_sub_months(Months::new(24)).expect("date in range"),
        exam.checked_add_months(Months::new(2)).expect("date in range"),
    )
}

/// Value of `kind`/`code` closest to the exam inside the window. On equal
/// distance the earlier (pre-exam) record wins, then timeline order.
pub fn nearest_value(timeline: &[EmrEvent], kind: EventKind, code: &str, exam: NaiveDate) -> Option<f64> {
    let (lo, hi) = lookup_window(exam);
    timeline
        .iter()
        .filter(|e| e.kind == kind && e.code == code && e.date >= lo && e.date <= hi)
        .filter_map(|e| e.value.map(|v| ((e.date - exam).num_days(), v)))
        .min_by_key(|&(d, _)| (d.abs(), d))
        .map(|(_, v)| v)
}

/// At least one dispensed prescription with one of `prefixes` in the window.
pub fn treated(timeline: &[EmrEvent], prefixes: &[&str], exam: NaiveDate) -> bool {
    let (lo, hi) = lookup_window(exam);
    timeline.iter().any(|e| {
        e.kind == EventKind::Medication && e.date >= lo && e.date <= hi && prefixes.iter().any(|p| e.code.starts_with(p))
    })
}

/// Gathers score inputs for one exam. `qrs_ms` comes from the recording and
/// is `None` when it could not be measured.
pub fn assemble_pcphf_inputs(
    timeline: &[EmrEvent],
    demographics: Option<&Demographics>,
    exam: NaiveDate,
    qrs_ms: Option<f64>,
) -> Result<PcphfInputs, ClinicalError> {
    let mut missing = Vec::new();
    let mut get = |kind, code: &'static str| {
        let v = nearest_value(timeline, kind, code, exam);
        if v.is_none() {
            missing.push(code.to_string());
        }
        v.unwrap_or(f64::NAN)
    };
    let sbp = get(EventKind::Measure, "sbp");
    let glucose = get(EventKind::Lab, "glucose");
    let total_chol = get(EventKind::Lab, "total_chol");
    let hdl = get(EventKind::Lab, "hdl");
    let bmi = get(EventKind::Measure, "bmi");
    if qrs_ms.is_none() {
        missing.push("qrs_ms".into());
    }
    let Some(demo) = demographics else {
        missing.extend(["sex", "age", "smoker"].map(String::from));
        return Err(ClinicalError::MissingVariable(missing));
    };
    if !missing.is_empty() {
        return Err(ClinicalError::MissingVariable(missing));
    }
    Ok(PcphfInputs {
        sex: demo.sex,
        age: (exam.year() - demo.birth_year) as f64,
        sbp,
        sbp_treated: treated(timeline, &ANTIHYPERTENSIVE_ATC, exam),
        glucose,
        glucose_treated: treated(timeline, &GLUCOSE_LOWERING_ATC, exam),
        total_chol,
        hdl,
        bmi,
        qrs_ms: qrs_ms.unwrap_or(f64::NAN),
        smoker: demo.smoker,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Sex;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn full(exam: NaiveDate) -> Vec<EmrEvent> {
        let mut t = vec![
            EmrEvent::valued("p", EventKind::Measure, "sbp", 150.0, d("2016-07-01")),
            EmrEvent::valued("p", EventKind::Measure, "sbp", 132.0, d("2018-02-01")),
            EmrEvent::valued("p", EventKind::Lab, "glucose", 99.0, d("2017-06-01")),
            EmrEvent::valued("p", EventKind::Lab, "total_chol", 180.0, d("2017-06-01")),
            EmrEvent::valued("p", EventKind::Lab, "hdl", 45.0, d("2017-06-01")),
            EmrEvent::valued("p", EventKind::Measure, "bmi", 28.0, d("2017-06-01")),
        ];
        t.sort_by_key(|e| e.date);
        assert_eq!(exam, d("2018-01-01"));
        t
    }

    fn demo() -> Demographics {
        Demographics {
            patient_id: "p".into(),
            sex: Sex::Female,
            birth_year: 1955,
            smoker: false,
        }
    }

    #[test]
    fn nearest_reading_wins() {
        let exam = d("2018-01-01");
        let inputs = assemble_pcphf_inputs(&full(exam), Some(&demo()), exam, Some(95.0)).unwrap();
        assert_eq!(inputs.sbp, 132.0);
        assert_eq!(inputs.age, 63.0);
        assert!(!inputs.sbp_treated);
    }

    #[test]
    fn ties_prefer_the_earlier_record() {
        let exam = d("2018-01-01");
        let t = vec![
            EmrEvent::valued("p", EventKind::Measure, "sbp", 140.0, d("2017-12-22")),
            EmrEvent::valued("p", EventKind::Measure, "sbp", 120.0, d("2018-01-11")),
        ];
        assert_eq!(nearest_value(&t, EventKind::Measure, "sbp", exam), Some(140.0));
        let mut rev = t.clone();
        rev.reverse();
        assert_eq!(nearest_value(&rev, EventKind::Measure, "sbp", exam), Some(140.0));
    }

    #[test]
    fn stale_labs_are_missing() {
        let exam = d("2018-01-01");
        let mut t = full(exam);
        for e in t.iter_mut().filter(|e| e.code == "glucose") {
            e.date = d("2015-12-01");
        }
        let err = assemble_pcphf_inputs(&t, Some(&demo()), exam, Some(95.0)).unwrap_err();
        assert!(matches!(err, ClinicalError::MissingVariable(ref f) if f == &["glucose".to_string()]));
        let err = assemble_pcphf_inputs(&t, None, exam, None).unwrap_err();
        assert!(matches!(err, ClinicalError::MissingVariable(ref f) if f.len() == 5));
    }

    #[test]
    fn recent_antihypertensive_sets_the_flag() {
        let exam = d("2018-01-01");
        let mut t = full(exam);
        t.push(EmrEvent::medication("p", "C09AA02", d("2017-10-01")));
        t.push(EmrEvent::medication("p", "A10BA02", d("2015-01-01")));
        let inputs = assemble_pcphf_inputs(&t, Some(&demo()), exam, Some(95.0)).unwrap();
        assert!(inputs.sbp_treated);
        assert!(!inputs.glucose_treated);
    }
}
