//! TOML run configuration: an output directory, optional thread count,
//! verdict tolerances, and a list of `[[experiment]]` tables. Unknown keys
//! are rejected with the parser's line/column diagnostics so typos surface
//! as config errors rather than silently-defaulted fields.

use crate::error::{Error, Result};
use crate::experiments::{ExperimentSpec, Tolerances};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Where records, CSVs, and binary dumps land (created if missing).
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads for sweeps; `None` defers to the environment.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(rename = "experiment", default)]
    pub experiments: Vec<ExperimentSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Config {
    fn default() -> Self {
        Config {
            output_dir: default_output_dir(),
            threads: None,
            tolerances: Tolerances::default(),
            experiments: Vec::new(),
        }
    }
}

/// Parses a config document, turning TOML diagnostics (including unknown-key
/// reports with line/column positions) into [`Error::Config`].
pub fn parse_config(text: &str) -> Result<Config> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Canonical TOML form, used for files and for spec hashing round-trips.
pub fn to_toml(config: &Config) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::Config(format!("cannot serialize: {e}")))
}
