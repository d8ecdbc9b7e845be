use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Version in `git describe` form for a tagged release.
pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Record of one command invocation. Written when the command starts and
/// rewritten with the finish time and outputs when it succeeds.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip)]
    path: PathBuf,
}

impl RunManifest {
    pub fn begin(path: &Path, command: &str, config: Value, seed: Option<u64>) -> Result<Self> {
        let m = RunManifest {
            command: command.to_string(),
            config,
            seed,
            version: version(),
            started_unix: now(),
            finished_unix: None,
            outputs: Vec::new(),
            path: path.to_path_buf(),
        };
        m.write()?;
        Ok(m)
    }

    pub fn finish(mut self, outputs: Vec<PathBuf>) -> Result<()> {
        self.finished_unix = Some(now());
        self.outputs = outputs;
        self.write()
    }

    fn write(&self) -> Result<()> {
        write_atomic(&self.path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}
