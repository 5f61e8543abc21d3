//! ICD-9 code patterns.
//!
//! Grammar (whitespace-free):
//!
//! * `NNN` or `NNN.DD` - exact code.
//! * `NNN.X`, `NNN.DX`, `NNN.DDX` - the digits given, then any (possibly empty)
//!   run of further digits.
//! * `NNN.XD` - any single digit followed by `D` (e.g. `433.X1`).
//! * `AAA-BBB.SUFFIX` - every code whose category lies in `AAA..=BBB`; for the
//!   upper category the decimal part must not exceed `SUFFIX` (digits, then a
//!   trailing `X`). `410-412.X` therefore covers all of 410, 411 and 412, and
//!   `209-209.79X` covers 209.0 through 209.79.

use std::cmp::Ordering;
use std::sync::LazyLock;

use regex::Regex;

use super::CohortError;

static CODE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\d{3}(?:\.\d{1,2})?|[VE]\d{2,3}(?:\.\d{1,2})?)$").expect("regex"));
static SINGLE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{3})(?:\.([0-9X]{1,3}))?$").expect("regex"));
static RANGE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{3})-(\d{3})(?:\.(\d{0,2})X?)?$").expect("regex"));

pub const HF_PATTERNS: &[&str] = &[
    "428.X", "402.01X", "402.11X", "402.91X", "404.01X", "404.03X", "404.11X", "404.13", "404.93X",
    "416.11X", "514.2X", "514.3X", "518.4X",
];

/// Comorbidity rows: `(name, patterns)`.
pub const COMORBIDITIES: &[(&str, &[&str])] = &[
    ("diabetes", &["249-250.X"]),
    ("ischemic_heart_disease", &["410-414.X"]),
    ("mi_or_acute_coronary", &["410-412.X"]),
    ("ischemic_other", &["413-414.X"]),
    ("cerebrovascular", &["430-438.X"]),
    ("stroke", &["431.X", "433.X1", "434.X1", "435.X", "436.X", "438.X"]),
    ("chronic_renal_failure", &["585.6X", "586.X"]),
    ("acute_renal_failure", &["584.X"]),
    ("conduction_disorders", &["426.X"]),
    ("dysrhythmia", &["427.X"]),
    ("af_or_flutter", &["427.3X"]),
    ("hypertension", &["401-405.X"]),
    ("valvular", &["394.X", "385.X", "397.X", "398.X", "424.X"]),
    ("copd", &["490-496.X"]),
    (
        "cancer",
        &[
            "140-159.9X",
            "160-165.9X",
            "170-176.9X",
            "179-189.9X",
            "190-199.2X",
            "200-208.92X",
            "209-209.79X",
        ],
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tok {
    Digit(u8),
    AnyDigit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Icd9Pattern {
    Single {
        category: u16,
        decimals: Vec<Tok>,
        open_tail: bool,
    },
    Range {
        lo: u16,
        hi: u16,
        hi_decimals: Vec<u8>,
    },
}

fn bad(p: &str, why: &str) -> CohortError {
    CohortError::BadPattern {
        pattern: p.to_string(),
        reason: why.to_string(),
    }
}

impl Icd9Pattern {
    pub fn parse(s: &str) -> Result<Self, CohortError> {
        let s = s.trim();
        if let Some(c) = RANGE_RE.captures(s) {
            let lo: u16 = c[1].parse().expect("digits");
            let hi: u16 = c[2].parse().expect("digits");
            if lo > hi {
                return Err(bad(s, "range bounds are reversed"));
            }
            let hi_decimals = c
                .get(3)
                .map(|m| m.as_str().bytes().map(|b| b - b'0').collect())
                .unwrap_or_default();
            return Ok(Self::Range { lo, hi, hi_decimals });
        }
        let c = SINGLE_RE
            .captures(s)
            .ok_or_else(|| bad(s, "expected NNN[.digits/X] or NNN-MMM[.digitsX]"))?;
        let category: u16 = c[1].parse().expect("digits");
        let tail = c.get(2).map(|m| m.as_str()).unwrap_or("");
        let open_tail = tail.ends_with('X');
        let body = if open_tail { &tail[..tail.len() - 1] } else { tail };
        let decimals: Vec<Tok> = body
            .bytes()
            .map(|b| if b == b'X' { Tok::AnyDigit } else { Tok::Digit(b - b'0') })
            .collect();
        if decimals.len() > 2 {
            return Err(bad(s, "at most two decimal digits"));
        }
        Ok(Self::Single {
            category,
            decimals,
            open_tail,
        })
    }

    pub fn matches(&self, code: &Icd9Code) -> bool {
        let Icd9Code::Numeric { category, decimals } = code else {
            return false;
        };
        match self {
            Self::Single {
                category: c,
                decimals: pat,
                open_tail,
            } => {
                if c != category || decimals.len() < pat.len() {
                    return false;
                }
                if !open_tail && decimals.len() != pat.len() {
                    return false;
                }
                pat.iter().zip(decimals).all(|(t, d)| match t {
                    Tok::Digit(v) => v == d,
                    Tok::AnyDigit => true,
                })
            }
            Self::Range { lo, hi, hi_decimals } => {
                if category < lo || category > hi {
                    return false;
                }
                if category < hi {
                    return true;
                }
                for (i, b) in hi_decimals.iter().enumerate() {
                    match decimals.get(i).map(|d| d.cmp(b)) {
                        None | Some(Ordering::Less) => return true,
                        Some(Ordering::Greater) => return false,
                        Some(Ordering::Equal) => {}
                    }
                }
                true
            }
        }
    }
}

/// A validated ICD-9 diagnosis code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Icd9Code {
    Numeric { category: u16, decimals: Vec<u8> },
    /// Supplementary V/E codes; never matched by numeric patterns.
    Supplementary(String),
}

impl Icd9Code {
    pub fn parse(s: &str) -> Result<Self, CohortError> {
        let s = s.trim();
        if !CODE_RE.is_match(s) {
            return Err(CohortError::BadCode(s.to_string()));
        }
        if s.starts_with(['V', 'E']) {
            return Ok(Self::Supplementary(s.to_string()));
        }
        let (cat, dec) = s.split_once('.').unwrap_or((s, ""));
        Ok(Self::Numeric {
            category: cat.parse().expect("validated"),
            decimals: dec.bytes().map(|b| b - b'0').collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet(Vec<Icd9Pattern>);

impl PatternSet {
    pub fn parse<S: AsRef<str>>(patterns: &[S]) -> Result<Self, CohortError> {
        patterns
            .iter()
            .map(|p| Icd9Pattern::parse(p.as_ref()))
            .collect::<Result<_, _>>()
            .map(Self)
    }

    pub fn hf() -> Self {
        Self::parse(HF_PATTERNS).expect("built-in patterns parse")
    }

    pub fn matches(&self, code: &Icd9Code) -> bool {
        self.0.iter().any(|p| p.matches(code))
    }

    /// Convenience: malformed codes never match.
    pub fn matches_str(&self, code: &str) -> bool {
        Icd9Code::parse(code).is_ok_and(|c| self.matches(&c))
    }
}

/// `true` iff `code` falls in any of `patterns`.
pub fn match_icd9<S: AsRef<str>>(code: &str, patterns: &[S]) -> Result<bool, CohortError> {
    let set = PatternSet::parse(patterns)?;
    Ok(set.matches(&Icd9Code::parse(code)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hf(code: &str) -> bool {
        match_icd9(code, HF_PATTERNS).unwrap()
    }

    #[test]
    fn heart_failure_row() {
        assert!(hf("428.0"));
        assert!(hf("428"));
        assert!(hf("428.21"));
        assert!(!hf("427.31"));
        assert!(hf("402.01"));
        assert!(!hf("402.0"));
        assert!(!hf("402.00"));
        assert!(hf("404.13"));
        assert!(!hf("404.1"));
        assert!(hf("518.4"));
        assert!(!hf("518.5"));
        assert!(hf("514.3"));
        assert!(!hf("V42.1"));
    }

    #[test]
    fn ranges_cover_whole_categories() {
        assert!(match_icd9("410.71", &["410-412.X"]).unwrap());
        assert!(match_icd9("412", &["410-412.X"]).unwrap());
        assert!(!match_icd9("413.9", &["410-412.X"]).unwrap());
        assert!(!match_icd9("409.9", &["410-412.X"]).unwrap());
    }

    #[test]
    fn range_upper_bound_limits_decimals() {
        let p = ["209-209.79X"];
        assert!(match_icd9("209.79", &p).unwrap());
        assert!(match_icd9("209.7", &p).unwrap());
        assert!(match_icd9("209.25", &p).unwrap());
        assert!(!match_icd9("209.8", &p).unwrap());
        let p = ["190-199.2X"];
        assert!(match_icd9("195.8", &p).unwrap());
        assert!(match_icd9("199.2", &p).unwrap());
        assert!(!match_icd9("199.3", &p).unwrap());
    }

    #[test]
    fn inner_wildcard_is_one_digit() {
        let p = ["433.X1"];
        assert!(match_icd9("433.11", &p).unwrap());
        assert!(!match_icd9("433.10", &p).unwrap());
        assert!(!match_icd9("433.1", &p).unwrap());
    }

    #[test]
    fn malformed_patterns_and_codes_are_errors() {
        for p in ["42", "428.", "428.XX1", "abc", "412-410.X", "428.0Y", "428.123"] {
            assert!(
                matches!(Icd9Pattern::parse(p), Err(CohortError::BadPattern { .. })),
                "{p}"
            );
        }
        assert!(matches!(Icd9Code::parse("42"), Err(CohortError::BadCode(_))));
        assert!(Icd9Code::parse("E880.1").is_ok());
    }

    #[test]
    fn comorbidity_table_parses() {
        for (name, pats) in COMORBIDITIES {
            PatternSet::parse(pats).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(match_icd9("401.9", COMORBIDITIES[11].1).unwrap());
    }
}
