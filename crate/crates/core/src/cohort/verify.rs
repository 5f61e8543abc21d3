//! Label-verification reports: treatment and echo documentation around the HF
//! diagnosis, and prior comorbidities.

use std::collections::BTreeMap;

use chrono::{Months, NaiveDate};
use serde::Serialize;

use super::emr::{EmrEvent, EventKind};
use super::icd9::{PatternSet, COMORBIDITIES};

/// HF treatment groups as ATC prefixes.
pub const MEDICATION_GROUPS: &[(&str, &[&str])] = &[
    ("mra", &["C03DA"]),
    ("sglt2i", &["A10BD20", "A10BD15"]),
    ("ras", &["C09"]),
    ("low_ceiling_diuretics", &["C03A", "C03B"]),
    ("high_ceiling_diuretics", &["C03C"]),
    ("beta_blockers", &["C07"]),
];

/// Ordered by priority: a later variant wins in `minimum_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MedCategory {
    NotDocumented,
    History,
    Future,
    NewOrRenewed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedicationReport {
    pub groups: BTreeMap<String, MedCategory>,
    pub minimum_1: MedCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoCategory {
    InsideRange,
    OutsideRange,
    NotDocumented,
}

fn years_before(d: NaiveDate, y: u32) -> NaiveDate {
    d.checked_sub_months(Months::new(12 * y)).expect("date in range")
}

fn years_after(d: NaiveDate, y: u32) -> NaiveDate {
    d.checked_add_months(Months::new(12 * y)).expect("date in range")
}

fn categorize(dates: &[NaiveDate], dx: NaiveDate) -> MedCategory {
    let (m1, m2, p1) = (years_before(dx, 1), years_before(dx, 2), years_after(dx, 1));
    let around = dates.iter().any(|&d| d >= m1 && d <= p1);
    let year_minus_two = dates.iter().any(|&d| d >= m2 && d < m1);
    if around && !year_minus_two {
        MedCategory::NewOrRenewed
    } else if dates.iter().any(|&d| d > p1) {
        MedCategory::Future
    } else if dates.iter().any(|&d| d < m1) {
        MedCategory::History
    } else {
        MedCategory::NotDocumented
    }
}

/// Per-group prescription category relative to `diagnosis_date`.
///
/// `new_or_renewed`: prescribed within a year either side of diagnosis and not
/// during the second year before it. Otherwise `future` if prescribed more than
/// a year after, else `history` if prescribed more than a year before.
pub fn medication_category(
    timeline: &[EmrEvent],
    groups: &[(&str, &[&str])],
    diagnosis_date: NaiveDate,
) -> MedicationReport {
    let mut out = BTreeMap::new();
    for (name, prefixes) in groups {
        let dates: Vec<NaiveDate> = timeline
            .iter()
            .filter(|e| e.kind == EventKind::Medication && prefixes.iter().any(|p| e.code.starts_with(p)))
            .map(|e| e.date)
            .collect();
        out.insert(name.to_string(), categorize(&dates, diagnosis_date));
    }
    let minimum_1 = out.values().copied().max().unwrap_or(MedCategory::NotDocumented);
    MedicationReport { groups: out, minimum_1 }
}

/// Echo documentation within one year before to two years after diagnosis.
pub fn echo_category(timeline: &[EmrEvent], diagnosis_date: NaiveDate) -> EchoCategory {
    let (lo, hi) = (years_before(diagnosis_date, 1), years_after(diagnosis_date, 2));
    let mut any = false;
    for e in timeline.iter().filter(|e| e.kind == EventKind::Echo) {
        if e.date >= lo && e.date <= hi {
            return EchoCategory::InsideRange;
        }
        any = true;
    }
    if any {
        EchoCategory::OutsideRange
    } else {
        EchoCategory::NotDocumented
    }
}

/// A comorbidity is present iff a matching diagnosis is dated strictly before `as_of`.
pub fn comorbidity_flags(timeline: &[EmrEvent], as_of: NaiveDate) -> BTreeMap<String, bool> {
    let prior: Vec<&EmrEvent> = timeline
        .iter()
        .filter(|e| e.kind == EventKind::Diagnosis && e.date < as_of)
        .collect();
    COMORBIDITIES
        .iter()
        .map(|(name, pats)| {
            let set = PatternSet::parse(pats).expect("built-in patterns parse");
            let hit = prior.iter().any(|e| set.matches_str(&e.code));
            (name.to_string(), hit)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn rx(atc: &str, date: &str) -> EmrEvent {
        EmrEvent::medication("p", atc, d(date))
    }

    #[test]
    fn medication_windows() {
        let dx = d("2018-01-15");
        let bb = |t: &[EmrEvent]| medication_category(t, MEDICATION_GROUPS, dx).groups["beta_blockers"];
        assert_eq!(bb(&[rx("C07AB07", "2018-07-15")]), MedCategory::NewOrRenewed);
        assert_eq!(bb(&[rx("C07AB07", "2015-01-15")]), MedCategory::History);
        assert_eq!(bb(&[]), MedCategory::NotDocumented);
        assert_eq!(bb(&[rx("C07AB07", "2020-01-15")]), MedCategory::Future);
        // Prescribed in year -2 as well: continued, not new.
        assert_eq!(
            bb(&[rx("C07AB07", "2016-06-01"), rx("C07AB07", "2017-06-01")]),
            MedCategory::History
        );
        // Exactly one year either side is inside.
        assert_eq!(bb(&[rx("C07A", "2017-01-15")]), MedCategory::NewOrRenewed);
        assert_eq!(bb(&[rx("C07A", "2019-01-15")]), MedCategory::NewOrRenewed);
        assert_eq!(bb(&[rx("C09AA02", "2018-01-01")]), MedCategory::NotDocumented);
    }

    #[test]
    fn minimum_one_is_highest_priority() {
        let t = [rx("C09AA02", "2012-01-01"), rx("C03DA01", "2021-01-01")];
        let r = medication_category(&t, MEDICATION_GROUPS, d("2018-01-15"));
        assert_eq!(r.groups["ras"], MedCategory::History);
        assert_eq!(r.groups["mra"], MedCategory::Future);
        assert_eq!(r.minimum_1, MedCategory::Future);
        assert_eq!(r.minimum_1, *r.groups.values().max().unwrap());
        let r = medication_category(&[], MEDICATION_GROUPS, d("2018-01-15"));
        assert_eq!(r.minimum_1, MedCategory::NotDocumented);
        assert_eq!(r.groups.len(), MEDICATION_GROUPS.len());
    }

    #[test]
    fn echo_window() {
        let dx = d("2018-01-01");
        let echo = |s: &str| EmrEvent::new("p", EventKind::Echo, "", d(s));
        assert_eq!(echo_category(&[echo("2019-07-01")], dx), EchoCategory::InsideRange);
        assert_eq!(echo_category(&[echo("2021-01-01")], dx), EchoCategory::OutsideRange);
        assert_eq!(echo_category(&[], dx), EchoCategory::NotDocumented);
        assert_eq!(
            echo_category(&[echo("2010-01-01"), echo("2017-01-01")], dx),
            EchoCategory::InsideRange
        );
    }

    #[test]
    fn comorbidities_before_reference_date() {
        let t = [
            EmrEvent::diagnosis("p", "401.9", d("2015-03-03")),
            EmrEvent::diagnosis("p", "250.0", d("2019-01-01")),
            EmrEvent::diagnosis("p", "427.31", d("2018-01-01")),
        ];
        let f = comorbidity_flags(&t, d("2018-01-01"));
        assert!(f["hypertension"]);
        assert!(!f["diabetes"]);
        assert!(!f["af_or_flutter"]);
        assert_eq!(f.len(), COMORBIDITIES.len());
        assert!(comorbidity_flags(&[], d("2018-01-01")).values().all(|v| !v));
    }
}
