use std::path::Path;

use groundkit::dataset::{HttpCleanerConfig, SplitSpec};
use groundkit::{EvalConfig, RefineConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CleanerKind {
    #[default]
    None,
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Placed between title and description.
    pub joiner: String,
    pub cleaner: CleanerKind,
    pub http: HttpCleanerConfig,
    /// Extra boilerplate patterns for the mock cleaner.
    pub mock_patterns: Vec<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            joiner: ". ".into(),
            cleaner: CleanerKind::None,
            http: HttpCleanerConfig::default(),
            mock_patterns: Vec::new(),
        }
    }
}

/// Everything a TOML config file can set. Missing sections and keys take
/// the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub refine: RefineConfig,
    pub eval: EvalConfig,
    pub split: SplitSpec,
    pub dataset: DatasetConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}
