use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Record of one successful command, written next to its outputs.
///
/// `args` is the full command line, so rerunning it in the same working
/// directory replays the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub duration_secs: f64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().collect(),
            config,
            seed,
            artifacts: Vec::new(),
            duration_secs: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
    }
}

/// `dir/name.json` becomes `dir/name.manifest.json`.
pub fn manifest_path_for(artifact: &Path) -> PathBuf {
    let stem = artifact
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    artifact.with_file_name(format!("{stem}.manifest.json"))
}
