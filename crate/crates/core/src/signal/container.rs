//! Open recording container: `<exam_id>.hheader` (key=value text) next to
//! `<exam_id>.hsig` (little-endian i16 samples).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::{EcgRecording, SignalError, FS, SCALE_UV_PER_LSB};

pub const HEADER_EXT: &str = "hheader";
pub const SIGNAL_EXT: &str = "hsig";
const TIME_FMT: &str = "%Y-%m-%dT%H:%M";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SignalError + '_ {
    move |source| SignalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Header and blob paths for `exam_id` inside `dir`.
pub fn container_paths(dir: &Path, exam_id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{exam_id}.{HEADER_EXT}")),
        dir.join(format!("{exam_id}.{SIGNAL_EXT}")),
    )
}

pub fn write_recording(dir: &Path, rec: &EcgRecording) -> Result<PathBuf, SignalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (hp, sp) = container_paths(dir, &rec.exam_id);
    let mut header = String::new();
    header.push_str(&format!("exam_id={}\n", rec.exam_id));
    header.push_str(&format!("patient_id={}\n", rec.patient_id));
    header.push_str(&format!("start_time={}\n", rec.start_time.format(TIME_FMT)));
    header.push_str(&format!("fs={}\n", rec.fs));
    header.push_str(&format!("n_samples={}\n", rec.len()));
    header.push_str(&format!("scale_uv_per_lsb={SCALE_UV_PER_LSB}\n"));
    if rec.valid_len != rec.len() {
        header.push_str(&format!("valid_len={}\n", rec.valid_len));
    }
    fs::write(&hp, header).map_err(io_err(&hp))?;
    let mut bytes = Vec::with_capacity(rec.len() * 2);
    for v in &rec.raw {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(&sp).map_err(io_err(&sp))?;
    f.write_all(&bytes).map_err(io_err(&sp))?;
    Ok(hp)
}

/// Parsed header fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingHeader {
    pub exam_id: String,
    pub patient_id: String,
    pub start_time: NaiveDateTime,
    pub n_samples: usize,
    pub valid_len: usize,
    pub header_path: PathBuf,
}

fn header_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == HEADER_EXT) {
        path.to_path_buf()
    } else {
        path.with_extension(HEADER_EXT)
    }
}

/// Reads only the header of a container (header path or path without extension).
pub fn read_header(path: &Path) -> Result<RecordingHeader, SignalError> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(io_err(&hp))?;
    let corrupt = |reason: String| SignalError::CorruptHeader {
        path: hp.display().to_string(),
        reason,
    };
    let mut exam_id = None;
    let mut patient_id = None;
    let mut start_time = None;
    let mut fs_hz = None;
    let mut n_samples = None;
    let mut scale = None;
    let mut valid_len = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("line {} is not key=value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| corrupt(format!("{k}: not an integer: {v}")))
        };
        match k {
            "exam_id" => exam_id = Some(v.to_string()),
            "patient_id" => patient_id = Some(v.to_string()),
            "start_time" => {
                let t = NaiveDateTime::parse_from_str(v, TIME_FMT)
                    .map_err(|e| corrupt(format!("start_time {v}: {e}")))?;
                start_time = Some(t);
            }
            "fs" => fs_hz = Some(num(v)?),
            "n_samples" => n_samples = Some(num(v)?),
            "scale_uv_per_lsb" => {
                scale = Some(
                    v.parse::<f64>()
                        .map_err(|_| corrupt(format!("scale: not a number: {v}")))?,
                )
            }
            "valid_len" => valid_len = Some(num(v)?),
            _ => {}
        }
    }
    let missing = |f: &str| corrupt(format!("missing field {f}"));
    let exam_id = exam_id.ok_or_else(|| missing("exam_id"))?;
    let patient_id = patient_id.ok_or_else(|| missing("patient_id"))?;
    let start_time = start_time.ok_or_else(|| missing("start_time"))?;
    let fs_hz = fs_hz.ok_or_else(|| missing("fs"))?;
    let n = n_samples.ok_or_else(|| missing("n_samples"))?;
    let scale = scale.ok_or_else(|| missing("scale_uv_per_lsb"))?;
    if fs_hz != FS {
        return Err(SignalError::BadSampleRate(fs_hz as u32));
    }
    if scale != SCALE_UV_PER_LSB {
        return Err(corrupt(format!("unsupported scale {scale} uV/LSB")));
    }
    let valid_len = valid_len.unwrap_or(n);
    if valid_len > n {
        return Err(corrupt(format!("valid_len {valid_len} exceeds n_samples {n}")));
    }
    Ok(RecordingHeader {
        exam_id,
        patient_id,
        start_time,
        n_samples: n,
        valid_len,
        header_path: hp,
    })
}

/// Reads a container given either its header path or its path without extension.
pub fn read_recording(path: &Path) -> Result<EcgRecording, SignalError> {
    let h = read_header(path)?;
    let sp = h.header_path.with_extension(SIGNAL_EXT);
    let bytes = fs::read(&sp).map_err(io_err(&sp))?;
    if bytes.len() != h.n_samples * 2 {
        return Err(SignalError::LengthMismatch {
            expected: h.n_samples,
            actual: bytes.len() / 2,
        });
    }
    let raw: Vec<i16> = bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(EcgRecording::from_raw(h.exam_id, h.patient_id, h.start_time, raw, h.valid_len))
}

/// Headers of every container in `dir`, sorted by exam id.
pub fn list_recordings(dir: &Path) -> Result<Vec<RecordingHeader>, SignalError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.extension().is_some_and(|e| e == HEADER_EXT) {
            out.push(read_header(&p)?);
        }
    }
    out.sort_by(|a, b| a.exam_id.cmp(&b.exam_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn rec(n: usize) -> EcgRecording {
        let t = NaiveDate::from_ymd_opt(2018, 3, 4).unwrap().and_hms_opt(7, 45, 0).unwrap();
        let raw = (0..n).map(|i| ((i * 37) % 4001) as i16 - 2000).collect();
        EcgRecording::from_raw("ex1", "pt1", t, raw, n)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let r = rec(5000);
        let hp = write_recording(dir.path(), &r).unwrap();
        assert_eq!(read_recording(&hp).unwrap(), r);
        assert_eq!(read_recording(&dir.path().join("ex1")).unwrap(), r);
        let h = read_header(&hp).unwrap();
        assert_eq!((h.n_samples, h.valid_len, h.patient_id.as_str()), (5000, 5000, "pt1"));
        let listed = list_recordings(dir.path()).unwrap();
        assert_eq!(listed.len(), 1);
        assert_eq!(listed[0].start_time, r.start_time);
    }

    #[test]
    fn full_scale_raw_value_reads_as_five_millivolts() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rec(10);
        r.raw[3] = 2000;
        let hp = write_recording(dir.path(), &r).unwrap();
        assert_eq!(read_recording(&hp).unwrap().uv(3), 5000.0);
    }

    #[test]
    fn short_blob_is_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let hp = write_recording(dir.path(), &rec(200)).unwrap();
        fs::write(hp.with_extension(SIGNAL_EXT), vec![0u8; 200]).unwrap();
        assert!(matches!(
            read_recording(&hp),
            Err(SignalError::LengthMismatch {
                expected: 200,
                actual: 100
            })
        ));
    }

    #[test]
    fn header_problems_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let hp = write_recording(dir.path(), &rec(4)).unwrap();
        let text = fs::read_to_string(&hp).unwrap();
        fs::write(&hp, text.replace("fs=128", "fs=1024")).unwrap();
        assert!(matches!(read_recording(&hp), Err(SignalError::BadSampleRate(1024))));
        fs::write(&hp, "exam_id=x\nthis line is junk\n").unwrap();
        assert!(matches!(read_recording(&hp), Err(SignalError::CorruptHeader { .. })));
        fs::write(&hp, text.replace("start_time=2018-03-04T07:45", "start_time=yesterday")).unwrap();
        assert!(matches!(read_recording(&hp), Err(SignalError::CorruptHeader { .. })));
    }
}
