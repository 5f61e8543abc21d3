use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClinicalError;
use crate::cohort::Sex;

/// The placeholder table bundled with the crate (not the published values).
pub const PLACEHOLDER_COEFFICIENTS: &str = include_str!("../../data/pcphf_coefficients.PLACEHOLDER.txt");

pub const KNOWN_TERMS: [&str; 14] = [
    "ln_age",
    "ln_age_sq",
    "ln_sbp",
    "ln_sbp_treated",
    "ln_age_x_ln_sbp",
    "ln_glucose",
    "ln_glucose_treated",
    "ln_total_chol",
    "ln_hdl",
    "smoker",
    "ln_age_x_smoker",
    "ln_bmi",
    "ln_age_x_ln_bmi",
    "ln_qrs",
];
/// Every sex must supply at least these.
pub const REQUIRED_TERMS: [&str; 8] = [
    "ln_age",
    "ln_sbp",
    "ln_glucose",
    "ln_total_chol",
    "ln_hdl",
    "smoker",
    "ln_bmi",
    "ln_qrs",
];
pub const AGE_RANGE: (f64, f64) = (30.0, 79.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcphfInputs {
    pub sex: Sex,
    pub age: f64,
    pub sbp: f64,
    pub sbp_treated: bool,
    pub glucose: f64,
    pub glucose_treated: bool,
    pub total_chol: f64,
    pub hdl: f64,
    pub bmi: f64,
    pub qrs_ms: f64,
    pub smoker: bool,
}

impl PcphfInputs {
    /// The equation was derived for ages 30–79; outside it the score is
    /// still computed.
    pub fn age_out_of_range(&self) -> bool {
        self.age < AGE_RANGE.0 || self.age > AGE_RANGE.1
    }

    /// Covariate value of a term. Untreated terms are used whatever the
    /// treatment flags say, so treated terms evaluate to zero.
    fn term(&self, name: &str) -> f64 {
        let ln_age = self.age.ln();
        let smoke = if self.smoker { 1.0 } else { 0.0 };
        match name {
            "ln_age" => ln_age,
            "ln_age_sq" => ln_age * ln_age,
            "ln_sbp" => self.sbp.ln(),
            "ln_age_x_ln_sbp" => ln_age * self.sbp.ln(),
            "ln_glucose" => self.glucose.ln(),
            "ln_total_chol" => self.total_chol.ln(),
            "ln_hdl" => self.hdl.ln(),
            "smoker" => smoke,
            "ln_age_x_smoker" => ln_age * smoke,
            "ln_bmi" => self.bmi.ln(),
            "ln_age_x_ln_bmi" => ln_age * self.bmi.ln(),
            "ln_qrs" => self.qrs_ms.ln(),
            _ => 0.0,
        }
    }

    fn check(&self) -> Result<(), ClinicalError> {
        let fields = [
            ("age", self.age),
            ("sbp", self.sbp),
            ("glucose", self.glucose),
            ("total_chol", self.total_chol),
            ("hdl", self.hdl),
            ("bmi", self.bmi),
            ("qrs_ms", self.qrs_ms),
        ];
        match fields.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            Some((name, v)) => Err(ClinicalError::NonPositive { field: name, value: *v }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub beta: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SexCoefficients {
    pub s0: f64,
    pub terms: BTreeMap<String, Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub male: SexCoefficients,
    pub female: SexCoefficients,
    /// SHA-256 of the source text, hex.
    pub sha256: String,
}

impl CoefficientTable {
    pub fn parse(text: &str) -> Result<Self, ClinicalError> {
        let bad = |line: usize, reason: String| ClinicalError::BadCoefficients { line, reason };
        let mut sections: BTreeMap<String, (Option<f64>, BTreeMap<String, Term>)> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                if name != "male" && name != "female" {
                    return Err(bad(n, format!("unknown section [{name}]")));
                }
                if sections.contains_key(&name) {
                    return Err(bad(n, format!("section [{name}] repeated")));
                }
                sections.insert(name.clone(), (None, BTreeMap::new()));
                current = Some(name);
                continue;
            }
            let sec = current
                .as_ref()
                .and_then(|c| sections.get_mut(c))
                .ok_or_else(|| bad(n, "entry before any [sex] section".into()))?;
            let (k, v) = line.split_once('=').ok_or_else(|| bad(n, "expected key = value".into()))?;
            let k = k.trim();
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(n, format!("{s:?}: {e}")));
            if k == "s0" {
                let s0 = num(v)?;
                if !(s0 > 0.0 && s0 < 1.0) {
                    return Err(bad(n, format!("s0 {s0} outside (0, 1)")));
                }
                sec.0 = Some(s0);
            } else if KNOWN_TERMS.contains(&k) {
                let (b, m) = v.split_once(',').ok_or_else(|| bad(n, "expected beta, mean".into()))?;
                let term = Term {
                    beta: num(b)?,
                    mean: num(m)?,
                };
                if sec.1.insert(k.to_string(), term).is_some() {
                    return Err(bad(n, format!("term {k} repeated")));
                }
            } else {
                return Err(bad(n, format!("unknown term {k}")));
            }
        }
        let mut take = |sex: &str| -> Result<SexCoefficients, ClinicalError> {
            let (s0, terms) = sections.remove(sex).ok_or_else(|| ClinicalError::Incomplete(format!("no [{sex}] section")))?;
            let s0 = s0.ok_or_else(|| ClinicalError::Incomplete(format!("[{sex}] has no s0")))?;
            let missing: Vec<&str> = REQUIRED_TERMS.iter().copied().filter(|t| !terms.contains_key(*t)).collect();
            if !missing.is_empty() {
                return Err(ClinicalError::Incomplete(format!("[{sex}] lacks {}", missing.join(", "))));
            }
            Ok(SexCoefficients { s0, terms })
        };
        let male = take("male")?;
        let female = take("female")?;
        let sha256 = crate::sha256_hex(text.as_bytes());
        Ok(Self { male, female, sha256 })
    }

    pub fn load(path: &Path) -> Result<Self, ClinicalError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClinicalError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn placeholder() -> Self {
        Self::parse(PLACEHOLDER_COEFFICIENTS).expect("bundled table parses")
    }

    pub fn for_sex(&self, sex: Sex) -> &SexCoefficients {
        match sex {
            Sex::Male => &self.male,
            Sex::Female => &self.female,
        }
    }
}

/// Ten-year HF risk `1 − S0^exp(Σβ(x − x̄))`.
pub fn pcphf_score(inputs: &PcphfInputs, table: &CoefficientTable) -> Result<f64, ClinicalError> {
    inputs.check()?;
    let c = table.for_sex(inputs.sex);
    let lp: f64 = c
        .terms
        .iter()
        .filter(|(name, _)| !name.ends_with("_treated"))
        .map(|(name, t)| t.beta * (inputs.term(name) - t.mean))
        .sum();
    Ok(1.0 - c.s0.powf(lp.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_means(table: &CoefficientTable) -> PcphfInputs {
        let m = |k: &str| table.male.terms[k].mean;
        PcphfInputs {
            sex: Sex::Male,
            age: m("ln_age").exp(),
            sbp: m("ln_sbp").exp(),
            sbp_treated: false,
            glucose: m("ln_glucose").exp(),
            glucose_treated: false,
            total_chol: m("ln_total_chol").exp(),
            hdl: m("ln_hdl").exp(),
            bmi: m("ln_bmi").exp(),
            qrs_ms: m("ln_qrs").exp(),
            smoker: false,
        }
    }

    #[test]
    fn placeholder_parses_with_hash() {
        let t = CoefficientTable::placeholder();
        assert_eq!(t.sha256.len(), 64);
        assert_eq!(t.male.terms.len(), 11);
    }

    #[test]
    fn risk_at_means_is_one_minus_s0() {
        let mut text = PLACEHOLDER_COEFFICIENTS.replace("smoker = 0.45, 0.20", "smoker = 0.45, 0.0");
        text = text.replace("ln_age_x_smoker = 0.05, 0.80", "ln_age_x_smoker = 0.05, 0.0");
        let t = CoefficientTable::parse(&text).unwrap();
        let r = pcphf_score(&at_means(&t), &t).unwrap();
        assert!((r - (1.0 - t.male.s0)).abs() < 1e-12);
    }

    #[test]
    fn older_is_riskier_and_treatment_flags_are_ignored() {
        let t = CoefficientTable::placeholder();
        let base = at_means(&t);
        assert!(t.male.terms["ln_age"].beta > 0.0);
        let mut prev = 0.0;
        for age in [40.0, 50.0, 60.0, 70.0] {
            let r = pcphf_score(&PcphfInputs { age, ..base }, &t).unwrap();
            assert!(r > prev);
            prev = r;
        }
        let flipped = PcphfInputs {
            sbp_treated: true,
            glucose_treated: true,
            ..base
        };
        assert_eq!(pcphf_score(&base, &t).unwrap(), pcphf_score(&flipped, &t).unwrap());
    }

    #[test]
    fn incomplete_or_malformed_tables_are_rejected() {
        let no_female = PLACEHOLDER_COEFFICIENTS.split("[female]").next().unwrap();
        assert!(matches!(CoefficientTable::parse(no_female), Err(ClinicalError::Incomplete(_))));
        let no_hdl = PLACEHOLDER_COEFFICIENTS.replace("ln_hdl = -0.60, 4.05", "");
        assert!(matches!(CoefficientTable::parse(&no_hdl), Err(ClinicalError::Incomplete(m)) if m.contains("ln_hdl")));
        let odd = format!("{PLACEHOLDER_COEFFICIENTS}\n[male]\n");
        assert!(matches!(CoefficientTable::parse(&odd), Err(ClinicalError::BadCoefficients { .. })));
        let unknown = PLACEHOLDER_COEFFICIENTS.replace("ln_qrs = 0.60", "ln_qt = 0.60");
        assert!(CoefficientTable::parse(&unknown).is_err());
    }
}
