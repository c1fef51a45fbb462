//! JSON run configs. Every field is optional; a field set here acts as the
//! default for the matching flag, and an explicit flag always wins.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Failure;

/// Flag defaults read from `--config`. Unknown keys are rejected so typos
/// surface instead of silently falling through to built-in defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FileConfig {
    pub graph: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub steps: Option<u64>,
    pub thin: Option<u64>,
    pub samples: Option<u64>,
    pub replicas: Option<u64>,
    pub horizon: Option<u64>,
    pub n: Option<usize>,
    pub vertex: Option<usize>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub significance: Option<f64>,
    pub init: Option<String>,
    pub d: Option<Vec<u32>>,
    pub alpha: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
}

pub(crate) fn load(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("config {}: {e}", path.display())))
}
