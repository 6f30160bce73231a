use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trainer::MetricsRecord;

/// Record of one `train` invocation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub run_id: String,
    /// Canonical config text; feeding it back to `train` repeats the run.
    pub config: String,
    pub started: String,
    pub finished: String,
    /// `completed` or `diverged`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub final_metrics: Option<MetricsRecord>,
    pub artifacts: Vec<PathBuf>,
}

/// 12 hex digits of SHA-256 over the config text and start time.
pub fn run_id(config: &str, started: &str) -> String {
    let mut h = Sha256::new();
    h.update(config.as_bytes());
    h.update(b"\0");
    h.update(started.as_bytes());
    hex::encode(h.finalize())[..12].to_string()
}

impl RunManifest {
    /// Fails if any listed artifact is missing.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(missing) = self.artifacts.iter().find(|p| !p.exists()) {
            return Err(Error::Invalid(format!("artifact {} does not exist", missing.display())));
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
