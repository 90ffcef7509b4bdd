use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use groundkit::dataset::file_digest;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FILE_NAME: &str = "run_manifest.json";

/// Provenance of one command run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    /// The effective configuration after flags, file and defaults.
    pub config: serde_json::Value,
    /// path -> sha256 of the file content
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at_ms: u64,
    pub elapsed_ms: u64,
}

pub struct Recorder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    started_at_ms: u64,
    clock: Instant,
}

fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| {
            file_digest(p)
                .map(|d| (p.display().to_string(), d))
                .map_err(|e| CliError::Data(format!("cannot hash {}: {e}", p.display())))
        })
        .collect()
}

impl Recorder {
    pub fn start(command: &str, config: &impl Serialize, inputs: &[&Path]) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("configs serialize"),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            started_at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            clock: Instant::now(),
        }
    }

    /// Hashes inputs and outputs and writes the manifest into `out_dir`.
    pub fn finish(self, out_dir: &Path, outputs: &[PathBuf]) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: self.command,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            inputs: digests(&self.inputs)?,
            outputs: digests(outputs)?,
            started_at_ms: self.started_at_ms,
            elapsed_ms: self.clock.elapsed().as_millis() as u64,
        };
        let path = out_dir.join(FILE_NAME);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}
