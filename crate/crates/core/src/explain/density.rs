use std::path::Path;

use chrono::Timelike;
use serde::Serialize;

use super::{AttentionProfile, ExplainError};

const DAY_MIN: u32 = 24 * 60;

/// Run of consecutive time-of-day bins; `end_min` is exclusive and exceeds
/// 1440 when the run wraps past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageInterval {
    pub start_min: u32,
    pub end_min: u32,
    pub mass: f64,
}

impl CoverageInterval {
    /// True when the interval lies within `[lo_min, hi_min)` on the same day.
    pub fn within(&self, lo_min: u32, hi_min: u32) -> bool {
        self.start_min >= lo_min && self.end_min <= hi_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircadianDensity {
    pub bin_min: u32,
    /// Mean over profiles of each profile's normalized histogram.
    pub mass: Vec<f64>,
    pub interval95: Option<CoverageInterval>,
    pub interval99: Option<CoverageInterval>,
}

/// Shortest circular run of bins holding at least `q` of the mass; ties go
/// to the earliest start.
fn shortest_cover(mass: &[f64], bin_min: u32, q: f64) -> Option<CoverageInterval> {
    let n = mass.len();
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let need = q * total - 1e-12;
    let mut best: Option<(usize, usize, f64)> = None;
    for start in 0..n {
        let mut acc = 0.0;
        for len in 1..=n {
            acc += mass[(start + len - 1) % n];
            if acc >= need {
                if best.is_none_or(|(_, l, _)| len < l) {
                    best = Some((start, len, acc));
                }
                break;
            }
        }
    }
    best.map(|(s, l, m)| CoverageInterval {
        start_min: s as u32 * bin_min,
        end_min: (s + l) as u32 * bin_min,
        mass: m / total,
    })
}

/// Accumulates each profile's mass into time-of-day bins of `bin_min`
/// minutes, normalizes per profile, averages, and reports the shortest
/// intervals covering 95% and 99% of the mass. `bin_min` must divide 1440.
pub fn circadian_density(profiles: &[AttentionProfile], bin_min: u32) -> CircadianDensity {
    assert!(bin_min > 0 && DAY_MIN % bin_min == 0, "bin width must divide a day");
    let n_bins = (DAY_MIN / bin_min) as usize;
    let mut mass = vec![0.0; n_bins];
    let mut used = 0usize;
    for p in profiles {
        let mut h = vec![0.0; n_bins];
        for (pos, &m) in p.mass.iter().enumerate() {
            if m > 0.0 {
                let t = p.wall_clock(pos);
                let minute = t.hour() * 60 + t.minute();
                h[(minute / bin_min) as usize] += m;
            }
        }
        let s: f64 = h.iter().sum();
        if s > 0.0 {
            mass.iter_mut().zip(&h).for_each(|(a, b)| *a += b / s);
            used += 1;
        }
    }
    if used > 0 {
        mass.iter_mut().for_each(|v| *v /= used as f64);
    }
    CircadianDensity {
        bin_min,
        interval95: shortest_cover(&mass, bin_min, 0.95),
        interval99: shortest_cover(&mass, bin_min, 0.99),
        mass,
    }
}

impl CircadianDensity {
    /// `density.csv`: bin_start (HH:MM), mass.
    pub fn write_csv(&self, path: &Path) -> Result<(), ExplainError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| ExplainError::io(path, e))?;
        w.write_record(["bin_start", "mass"]).map_err(|e| ExplainError::io(path, e))?;
        for (i, m) in self.mass.iter().enumerate() {
            let start = i as u32 * self.bin_min;
            w.write_record([format!("{:02}:{:02}", start / 60, start % 60), m.to_string()])
                .map_err(|e| ExplainError::io(path, e))?;
        }
        w.flush().map_err(|e| ExplainError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDateTime;

    fn profile(start: &str, mass: Vec<f64>) -> AttentionProfile {
        let n = mass.len();
        AttentionProfile {
            exam_id: "x".into(),
            start_time: NaiveDateTime::parse_from_str(start, "%Y-%m-%d %H:%M").unwrap(),
            mass,
            valid: vec![true; n],
        }
    }

    #[test]
    fn point_mass_lands_in_its_bin() {
        let mut m = vec![0.0; 720];
        m[30] = 1.0; // one hour after an 08:00 start
        let d = circadian_density(&[profile("2018-01-01 08:00", m)], 30);
        let iv = d.interval95.unwrap();
        assert_eq!((iv.start_min, iv.end_min), (540, 570));
        assert_eq!(d.interval99, d.interval95);
        assert!((d.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_starts_with_uniform_profiles_are_flat() {
        let u = vec![1.0 / 720.0; 720];
        let d = circadian_density(
            &[profile("2018-01-01 00:00", u.clone()), profile("2018-01-01 12:00", u)],
            60,
        );
        for &m in &d.mass {
            assert!((m - 1.0 / 24.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cover_wraps_midnight() {
        let mut mass = vec![0.0; 24];
        mass[23] = 0.5;
        mass[0] = 0.5;
        let iv = shortest_cover(&mass, 60, 0.95).unwrap();
        assert_eq!((iv.start_min, iv.end_min), (23 * 60, 25 * 60));
        assert!(!iv.within(420, 1200));
        assert!(shortest_cover(&[0.0; 4], 60, 0.95).is_none());
    }
}
