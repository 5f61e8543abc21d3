use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::TrainError;
use crate::signal::container::container_paths;
use crate::signal::{normalize_duration, read_recording, EcgRecording};

/// Where training and scoring find recordings by exam id.
pub trait RecordingSource: Sync {
    fn recording(&self, exam_id: &str) -> Result<Cow<'_, EcgRecording>, TrainError>;
}

/// Recordings held in memory, assumed already normalized to 24 h.
impl RecordingSource for BTreeMap<String, EcgRecording> {
    fn recording(&self, exam_id: &str) -> Result<Cow<'_, EcgRecording>, TrainError> {
        self.get(exam_id)
            .map(Cow::Borrowed)
            .ok_or_else(|| TrainError::MissingRecording(exam_id.to_string()))
    }
}

/// Containers in a directory, read and normalized on demand.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub dir: PathBuf,
}

impl DirSource {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }
}

impl RecordingSource for DirSource {
    fn recording(&self, exam_id: &str) -> Result<Cow<'_, EcgRecording>, TrainError> {
        let (path, _) = container_paths(&self.dir, exam_id);
        if !path.exists() {
            return Err(TrainError::MissingRecording(exam_id.to_string()));
        }
        Ok(Cow::Owned(normalize_duration(read_recording(&path)?)?))
    }
}

/// Maps `f` over `items` on up to `threads` scoped workers, keeping order.
pub fn par_map<I: Sync, O: Send>(items: &[I], threads: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<O>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
