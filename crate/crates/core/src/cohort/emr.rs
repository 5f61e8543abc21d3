//! EMR-style event tables keyed by patient.
//!
//! Files (all optional, comma separated, with header row, ISO dates):
//!
//! | file             | columns                              |
//! |------------------|--------------------------------------|
//! | diagnoses.csv    | patient_id, icd9, date, source       |
//! | medications.csv  | patient_id, atc, date                |
//! | labs.csv         | patient_id, name, value, date        |
//! | measures.csv     | patient_id, name, value, date        |
//! | echoes.csv       | patient_id, date                     |
//! | deaths.csv       | patient_id, date                     |
//! | admissions.csv   | patient_id, department, date         |
//! | demographics.csv | patient_id, sex, birth_year, smoker  |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::icd9::Icd9Code;
use super::CohortError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Diagnosis,
    Medication,
    Lab,
    Measure,
    Admission,
    Echo,
    Death,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Clinic,
    Hospital,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmrEvent {
    pub patient_id: String,
    pub kind: EventKind,
    /// ICD-9 code, ATC code, lab/measure name or admitting department.
    pub code: String,
    pub value: Option<f64>,
    pub date: NaiveDate,
    pub source: Option<Source>,
}

impl EmrEvent {
    pub fn new(patient_id: &str, kind: EventKind, code: &str, date: NaiveDate) -> Self {
        Self {
            patient_id: patient_id.to_string(),
            kind,
            code: code.to_string(),
            value: None,
            date,
            source: None,
        }
    }

    pub fn diagnosis(patient_id: &str, icd9: &str, date: NaiveDate) -> Self {
        Self {
            source: Some(Source::Clinic),
            ..Self::new(patient_id, EventKind::Diagnosis, icd9, date)
        }
    }

    pub fn medication(patient_id: &str, atc: &str, date: NaiveDate) -> Self {
        Self::new(patient_id, EventKind::Medication, atc, date)
    }

    pub fn valued(patient_id: &str, kind: EventKind, name: &str, value: f64, date: NaiveDate) -> Self {
        Self {
            value: Some(value),
            ..Self::new(patient_id, kind, name, date)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub patient_id: String,
    pub sex: Sex,
    pub birth_year: i32,
    pub smoker: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Emr {
    pub timelines: BTreeMap<String, Vec<EmrEvent>>,
    pub demographics: BTreeMap<String, Demographics>,
}

#[derive(Serialize, Deserialize)]
struct DiagnosisRow {
    patient_id: String,
    icd9: String,
    date: NaiveDate,
    source: Source,
}

#[derive(Serialize, Deserialize)]
struct MedicationRow {
    patient_id: String,
    atc: String,
    date: NaiveDate,
}

#[derive(Serialize, Deserialize)]
struct ValueRow {
    patient_id: String,
    name: String,
    value: f64,
    date: NaiveDate,
}

#[derive(Serialize, Deserialize)]
struct DateRow {
    patient_id: String,
    date: NaiveDate,
}

#[derive(Serialize, Deserialize)]
struct AdmissionRow {
    patient_id: String,
    department: String,
    date: NaiveDate,
}

fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, CohortError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CohortError::csv(path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| CohortError::csv(path, e)))
        .collect()
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CohortError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CohortError::csv(path, e))?;
    }
    w.flush().map_err(|e| CohortError::io(path, e))
}

impl Emr {
    pub fn push(&mut self, e: EmrEvent) {
        self.timelines.entry(e.patient_id.clone()).or_default().push(e);
    }

    /// Sorts every timeline by date (stable, so file order breaks ties).
    pub fn sort(&mut self) {
        for t in self.timelines.values_mut() {
            t.sort_by_key(|e| e.date);
        }
    }

    pub fn timeline(&self, patient_id: &str) -> &[EmrEvent] {
        self.timelines.get(patient_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Latest dated event of any kind across all patients.
    pub fn latest_event_date(&self) -> Option<NaiveDate> {
        self.timelines.values().flatten().map(|e| e.date).max()
    }

    pub fn load_dir(dir: &Path) -> Result<Self, CohortError> {
        let mut emr = Emr::default();
        for r in read_rows::<DiagnosisRow>(&dir.join("diagnoses.csv"))? {
            Icd9Code::parse(&r.icd9)?;
            emr.push(EmrEvent {
                source: Some(r.source),
                ..EmrEvent::new(&r.patient_id, EventKind::Diagnosis, &r.icd9, r.date)
            });
        }
        for r in read_rows::<MedicationRow>(&dir.join("medications.csv"))? {
            emr.push(EmrEvent::medication(&r.patient_id, &r.atc, r.date));
        }
        for (file, kind) in [("labs.csv", EventKind::Lab), ("measures.csv", EventKind::Measure)] {
            for r in read_rows::<ValueRow>(&dir.join(file))? {
                emr.push(EmrEvent::valued(&r.patient_id, kind, &r.name, r.value, r.date));
            }
        }
        for (file, kind) in [("echoes.csv", EventKind::Echo), ("deaths.csv", EventKind::Death)] {
            for r in read_rows::<DateRow>(&dir.join(file))? {
                emr.push(EmrEvent::new(&r.patient_id, kind, "", r.date));
            }
        }
        for r in read_rows::<AdmissionRow>(&dir.join("admissions.csv"))? {
            emr.push(EmrEvent::new(&r.patient_id, EventKind::Admission, &r.department, r.date));
        }
        for d in read_rows::<Demographics>(&dir.join("demographics.csv"))? {
            emr.demographics.insert(d.patient_id.clone(), d);
        }
        emr.sort();
        Ok(emr)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), CohortError> {
        fs::create_dir_all(dir).map_err(|e| CohortError::io(dir, e))?;
        let all = || self.timelines.values().flatten();
        let of = |k: EventKind| all().filter(move |e| e.kind == k);
        write_rows(
            &dir.join("diagnoses.csv"),
            of(EventKind::Diagnosis).map(|e| DiagnosisRow {
                patient_id: e.patient_id.clone(),
                icd9: e.code.clone(),
                date: e.date,
                source: e.source.unwrap_or(Source::Clinic),
            }),
        )?;
        write_rows(
            &dir.join("medications.csv"),
            of(EventKind::Medication).map(|e| MedicationRow {
                patient_id: e.patient_id.clone(),
                atc: e.code.clone(),
                date: e.date,
            }),
        )?;
        for (file, kind) in [("labs.csv", EventKind::Lab), ("measures.csv", EventKind::Measure)] {
            write_rows(
                &dir.join(file),
                of(kind).map(|e| ValueRow {
                    patient_id: e.patient_id.clone(),
                    name: e.code.clone(),
                    value: e.value.unwrap_or(f64::NAN),
                    date: e.date,
                }),
            )?;
        }
        for (file, kind) in [("echoes.csv", EventKind::Echo), ("deaths.csv", EventKind::Death)] {
            write_rows(
                &dir.join(file),
                of(kind).map(|e| DateRow {
                    patient_id: e.patient_id.clone(),
                    date: e.date,
                }),
            )?;
        }
        write_rows(
            &dir.join("admissions.csv"),
            of(EventKind::Admission).map(|e| AdmissionRow {
                patient_id: e.patient_id.clone(),
                department: e.code.clone(),
                date: e.date,
            }),
        )?;
        write_rows(&dir.join("demographics.csv"), self.demographics.values())
    }
}
