//! Run manifests written next to every CLI output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Echo of every parameter that affects the outputs.
    pub config: serde_json::Value,
    pub version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
    /// Descriptive extras (grid conventions, warnings, summary numbers).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub metadata: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, outputs: &[&Path]) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            metadata: serde_json::Value::Null,
        }
    }

    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = metadata;
        self
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
