//! Kaplan-Meier, logrank, odds ratios and incidence-based screening numbers.

use chrono::NaiveDate;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub time: f64,
    pub event: bool,
}

impl SurvivalRow {
    /// Time from exam to the event, or to `censor_date` when there is none.
    pub fn from_dates(exam: NaiveDate, event: Option<NaiveDate>, censor_date: NaiveDate) -> Self {
        let end = event.filter(|&d| d <= censor_date);
        Self {
            time: ((end.unwrap_or(censor_date) - exam).num_days()).max(0) as f64,
            event: end.is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    /// Survival just after `time`.
    pub survival: f64,
}

/// Product-limit estimate with one step per distinct observed time.
pub fn kaplan_meier(rows: &[SurvivalRow]) -> Vec<KmStep> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut at_risk = sorted.len();
    let mut s = 1.0;
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].time;
        let mut events = 0;
        let mut censored = 0;
        while i < sorted.len() && sorted[i].time == t {
            if sorted[i].event {
                events += 1;
            } else {
                censored += 1;
            }
            i += 1;
        }
        if events > 0 {
            s *= 1.0 - events as f64 / at_risk as f64;
        }
        out.push(KmStep {
            time: t,
            at_risk,
            events,
            censored,
            survival: s,
        });
        at_risk -= events + censored;
    }
    out
}

/// S(t) read off a curve from [`kaplan_meier`].
pub fn survival_at(curve: &[KmStep], t: f64) -> f64 {
    curve.iter().take_while(|s| s.time <= t).last().map_or(1.0, |s| s.survival)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Logrank {
    pub chi2: f64,
    pub p: f64,
    pub observed_a: f64,
    pub expected_a: f64,
}

/// Two-group logrank test with hypergeometric variance; p from χ² with 1 dof.
pub fn logrank(a: &[SurvivalRow], b: &[SurvivalRow]) -> Logrank {
    let mut times: Vec<f64> = a.iter().chain(b).filter(|r| r.event).map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let (mut o, mut e, mut v) = (0.0, 0.0, 0.0);
    for t in times {
        let risk = |g: &[SurvivalRow]| g.iter().filter(|r| r.time >= t).count() as f64;
        let deaths = |g: &[SurvivalRow]| g.iter().filter(|r| r.event && r.time == t).count() as f64;
        let (na, nb) = (risk(a), risk(b));
        let (da, db) = (deaths(a), deaths(b));
        let n = na + nb;
        let d = da + db;
        o += da;
        e += d * na / n;
        if n > 1.0 {
            v += d * (na / n) * (nb / n) * (n - d) / (n - 1.0);
        }
    }
    let chi2 = if v > 0.0 { (o - e).powi(2) / v } else { 0.0 };
    let p = if chi2 == 0.0 {
        1.0
    } else {
        ChiSquared::new(1.0).expect("dof").sf(chi2)
    };
    Logrank {
        chi2,
        p,
        observed_a: o,
        expected_a: e,
    }
}

/// Events at or before `horizon` days vs everyone else: `(events, non_events)`.
pub fn events_by(rows: &[SurvivalRow], horizon: f64) -> (usize, usize) {
    let ev = rows.iter().filter(|r| r.event && r.time <= horizon).count();
    (ev, rows.len() - ev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OddsRatio {
    pub or: f64,
    /// A zero cell was present and 0.5 was added to every cell.
    pub corrected: bool,
}

/// `(a/b) / (c/d)` for a 2×2 table of events and non-events in groups A and B.
pub fn odds_ratio(a_events: usize, a_non: usize, b_events: usize, b_non: usize) -> OddsRatio {
    let cells = [a_events, a_non, b_events, b_non].map(|c| c as f64);
    let corrected = cells.contains(&0.0);
    let [a, b, c, d] = if corrected { cells.map(|x| x + 0.5) } else { cells };
    OddsRatio {
        or: (a * d) / (b * c),
        corrected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub per_1000_py: f64,
    /// `None` when the rate is zero.
    pub nns: Option<u64>,
}

/// Number screened to prevent one event per 1000 person-years at `rate`
/// under an intervention with incidence rate ratio `irr`.
pub fn nns_from_rate(rate_per_1000: f64, irr: f64) -> Option<u64> {
    let reduction = rate_per_1000 * (1.0 - irr);
    (reduction > 0.0).then(|| (1000.0 / reduction).ceil() as u64)
}

/// Pools `(person_years, events)` rows into a rate and its NNS.
pub fn incidence_and_nns(rows: &[(f64, usize)], irr: f64) -> Result<Rate, EvalError> {
    let py: f64 = rows.iter().map(|r| r.0).sum();
    if py <= 0.0 {
        return Err(EvalError::ZeroExposure);
    }
    let events: usize = rows.iter().map(|r| r.1).sum();
    let rate = 1000.0 * events as f64 / py;
    Ok(Rate {
        per_1000_py: rate,
        nns: nns_from_rate(rate, irr),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(time: f64, event: bool) -> SurvivalRow {
        SurvivalRow { time, event }
    }

    #[test]
    fn two_events_no_censoring() {
        let km = kaplan_meier(&[r(1.0, true), r(2.0, true)]);
        assert_eq!(survival_at(&km, 0.0), 1.0);
        assert_eq!(survival_at(&km, 1.0), 0.5);
        assert_eq!(survival_at(&km, 2.0), 0.0);
    }

    #[test]
    fn censoring_only() {
        let km = kaplan_meier(&[r(3.0, false), r(5.0, false)]);
        assert!(km.iter().all(|s| s.survival == 1.0));
        let km = kaplan_meier(&[r(0.0, false), r(0.0, false)]);
        assert_eq!(km.len(), 1);
        assert_eq!(km[0].survival, 1.0);
        assert_eq!(km[0].at_risk - km[0].censored, 0);
    }

    #[test]
    fn rows_from_dates_censor_at_cutoff() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let row = SurvivalRow::from_dates(d("2018-01-01"), Some(d("2018-01-11")), d("2020-01-01"));
        assert_eq!(row, r(10.0, true));
        let row = SurvivalRow::from_dates(d("2018-01-01"), None, d("2018-01-31"));
        assert_eq!(row, r(30.0, false));
    }

    #[test]
    fn logrank_identical_and_swapped() {
        let g = [r(1.0, true), r(3.0, false), r(4.0, true), r(6.0, true)];
        let lr = logrank(&g, &g);
        assert_eq!((lr.chi2, lr.p), (0.0, 1.0));
        let h = [r(2.0, true), r(2.0, true), r(5.0, false), r(7.0, true)];
        let ab = logrank(&g, &h);
        let ba = logrank(&h, &g);
        assert!((ab.chi2 - ba.chi2).abs() < 1e-12);
        assert!((ab.p - ba.p).abs() < 1e-12);
    }

    #[test]
    fn odds_ratio_table() {
        assert_eq!(odds_ratio(20, 80, 5, 95).or, 4.75);
        assert_eq!(odds_ratio(10, 90, 10, 90).or, 1.0);
        let z = odds_ratio(0, 50, 5, 45);
        assert!(z.corrected);
        assert!((z.or - (0.5 * 45.5) / (50.5 * 5.5)).abs() < 1e-15);
        assert_eq!(events_by(&[r(10.0, true), r(400.0, true), r(50.0, false)], 365.0), (1, 2));
    }

    #[test]
    fn screening_numbers() {
        assert_eq!(nns_from_rate(41.5, 0.60), Some(61));
        assert_eq!(nns_from_rate(85.0, 0.60), Some(30));
        assert_eq!(nns_from_rate(124.0, 0.60), Some(21));
        let rate = incidence_and_nns(&[(500.0, 30), (500.0, 12)], 0.6).unwrap();
        assert_eq!(rate.per_1000_py, 42.0);
        assert_eq!(incidence_and_nns(&[(10.0, 0)], 0.6).unwrap().nns, None);
        assert!(matches!(incidence_and_nns(&[], 0.6), Err(EvalError::ZeroExposure)));
    }

    proptest! {
        #[test]
        fn km_is_a_monotone_survival_curve(
            rows in prop::collection::vec((0u16..50, any::<bool>()), 1..60)
        ) {
            let rows: Vec<SurvivalRow> = rows.iter().map(|&(t, e)| r(t as f64, e)).collect();
            let km = kaplan_meier(&rows);
            let mut prev = 1.0;
            for s in &km {
                prop_assert!((0.0..=1.0).contains(&s.survival));
                prop_assert!(s.survival <= prev);
                prev = s.survival;
            }
        }
    }
}
