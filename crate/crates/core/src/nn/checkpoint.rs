//! Checkpoint container: a text manifest plus a little-endian `f32` blob.
//!
//! ```text
//! deephhf-checkpoint 1
//! meta <key> <value>
//! param <name> <dim0>x<dim1>... <offset> <len>
//! ```
//!
//! Offsets and lengths count `f32` elements inside `<manifest>.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::params::ParamStore;
use crate::scalar::Scalar;

const MAGIC: &str = "deephhf-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("blob holds {actual} floats but manifest needs {expected}")]
    BlobSize { expected: usize, actual: usize },
    #[error("parameter {0} missing from checkpoint")]
    MissingParam(String),
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointData {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<TensorRecord>,
}

pub fn blob_path(manifest: &Path) -> PathBuf {
    let mut s = manifest.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl CheckpointData {
    pub fn from_store<T: Scalar>(meta: BTreeMap<String, String>, store: &ParamStore<T>) -> Self {
        Self {
            meta,
            tensors: store
                .params()
                .iter()
                .map(|p| TensorRecord {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.value.iter().map(|v| v.f64() as f32).collect(),
                })
                .collect(),
        }
    }

    /// Copies every tensor of `store` from this checkpoint, by name.
    pub fn load_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<(), CheckpointError> {
        self.load_matching(store, |_| true)
    }

    pub fn load_matching<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        select: impl Fn(&str) -> bool,
    ) -> Result<(), CheckpointError> {
        let by_name: BTreeMap<&str, &TensorRecord> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for p in store.params_mut() {
            if !select(&p.name) {
                continue;
            }
            let rec = by_name
                .get(p.name.as_str())
                .ok_or_else(|| CheckpointError::MissingParam(p.name.clone()))?;
            if rec.shape != p.shape {
                return Err(CheckpointError::ShapeMismatch {
                    name: p.name.clone(),
                    expected: p.shape.clone(),
                    found: rec.shape.clone(),
                });
            }
            p.value = rec.data.iter().map(|&v| T::of(v as f64)).collect();
        }
        Ok(())
    }

    pub fn save(&self, manifest: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = manifest.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut text = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            text.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        for t in &self.tensors {
            let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            text.push_str(&format!(
                "param {} {} {} {}\n",
                t.name,
                shape.join("x"),
                offset,
                t.data.len()
            ));
            offset += t.data.len();
        }
        fs::write(manifest, text).map_err(io_err(manifest))?;
        let bp = blob_path(manifest);
        let file = fs::File::create(&bp).map_err(io_err(&bp))?;
        let mut w = BufWriter::new(file);
        for t in &self.tensors {
            for v in &t.data {
                w.write_all(&v.to_le_bytes()).map_err(io_err(&bp))?;
            }
        }
        w.flush().map_err(io_err(&bp))?;
        Ok(())
    }

    pub fn load(manifest: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(manifest).map_err(io_err(manifest))?;
        let bp = blob_path(manifest);
        let bytes = fs::read(&bp).map_err(io_err(&bp))?;
        if bytes.len() % 4 != 0 {
            return Err(CheckpointError::BlobSize {
                expected: bytes.len().div_ceil(4),
                actual: bytes.len() / 4,
            });
        }
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let bad = |line: usize, reason: &str| CheckpointError::Manifest {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(bad(1, "missing checkpoint magic")),
        }
        let mut out = CheckpointData::default();
        let mut needed = 0usize;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ' ');
            match parts.next() {
                Some("meta") => {
                    let rest = parts.next().unwrap_or("");
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    out.meta.insert(k.to_string(), v.to_string());
                }
                Some("param") => {
                    let fields: Vec<&str> = parts.next().unwrap_or("").split(' ').collect();
                    if fields.len() != 4 {
                        return Err(bad(line_no, "param line needs 4 fields"));
                    }
                    let shape = fields[1]
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad(line_no, "bad shape"))?;
                    let offset: usize = fields[2].parse().map_err(|_| bad(line_no, "bad offset"))?;
                    let len: usize = fields[3].parse().map_err(|_| bad(line_no, "bad length"))?;
                    if shape.iter().product::<usize>() != len {
                        return Err(bad(line_no, "shape does not match length"));
                    }
                    needed = needed.max(offset + len);
                    if offset + len > floats.len() {
                        return Err(CheckpointError::BlobSize {
                            expected: offset + len,
                            actual: floats.len(),
                        });
                    }
                    out.tensors.push(TensorRecord {
                        name: fields[0].to_string(),
                        shape,
                        data: floats[offset..offset + len].to_vec(),
                    });
                }
                _ => return Err(bad(line_no, "unknown record")),
            }
        }
        if needed != floats.len() {
            return Err(CheckpointError::BlobSize {
                expected: needed,
                actual: floats.len(),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut store = ParamStore::<f32>::new();
        store.add("a.weight", &[2, 3], vec![1.5, -0.0, f32::MIN_POSITIVE, 3.25e-7, 7.0, -1e30]);
        store.add("b", &[1], vec![0.1]);
        let mut meta = BTreeMap::new();
        meta.insert("step".to_string(), "2".to_string());
        let ck = CheckpointData::from_store(meta, &store);
        ck.save(&path).unwrap();
        let back = CheckpointData::load(&path).unwrap();
        assert_eq!(back, ck);
        let mut fresh = ParamStore::<f32>::new();
        fresh.add("a.weight", &[2, 3], vec![0.0; 6]);
        fresh.add("b", &[1], vec![0.0]);
        back.load_into(&mut fresh).unwrap();
        for (x, y) in fresh.params().iter().zip(store.params()) {
            let xb: Vec<u32> = x.value.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.value.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut store = ParamStore::<f32>::new();
        store.add("w", &[4], vec![1.0; 4]);
        CheckpointData::from_store(BTreeMap::new(), &store).save(&path).unwrap();
        fs::write(blob_path(&path), [0u8; 8]).unwrap();
        assert!(matches!(
            CheckpointData::load(&path),
            Err(CheckpointError::BlobSize { .. })
        ));
    }
}
