use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

/// What a run needs to be repeated: the command line, the resolved
/// configuration and its hash, seeds, and tool versions.
pub struct Manifest {
    command: String,
    argv: Vec<String>,
    config: String,
    seeds: BTreeMap<String, u64>,
    extra: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            config: String::new(),
            seeds: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn config(mut self, text: impl Into<String>) -> Self {
        self.config = text.into();
        self
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn note(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.extra.insert(key.to_string(), v.into());
        self
    }

    /// Writes `manifest.json` into `dir`, or next to `dir` when it is a file path.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = if out.extension().is_some() && !out.is_dir() {
            let mut s = out.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        } else {
            out.join("manifest.json")
        };
        let v = json!({
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "config_sha256": deephhf::sha256_hex(self.config.as_bytes()),
            "seeds": self.seeds,
            "versions": {
                "deephhf": env!("CARGO_PKG_VERSION"),
                "format": 1,
            },
            "details": self.extra,
        });
        std::fs::write(&path, serde_json::to_string_pretty(&v)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
