//! Experiment config files: a versioned JSON mirror of the run/sweep flags.
//! Command-line flags take precedence over file values.

use anyhow::Result;
use paidreg::environment::Instance;
use serde::Deserialize;
use std::path::{Path, PathBuf};

const SUPPORTED_SCHEMA: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Path(String),
    Inline(Box<Instance>),
}

#[derive(Debug, Default, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub instance: Option<InstanceSource>,
    pub policy: Option<String>,
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub oracle_m: Option<usize>,
    pub k_override: Option<usize>,
    pub delta_override: Option<f64>,
    pub regularized: Option<bool>,
}

impl ExperimentConfig {
    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ExperimentConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| crate::usage(format!("invalid config {}: {e}", path.display())))?;
        if let Some(v) = cfg.schema_version {
            if v != SUPPORTED_SCHEMA {
                return Err(crate::usage(format!(
                    "unsupported config schema_version {v} (supported: {SUPPORTED_SCHEMA})"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn instance_path(&self) -> Option<PathBuf> {
        match &self.instance {
            Some(InstanceSource::Path(p)) => Some(PathBuf::from(p)),
            // Inline instances need no path; return a placeholder so the
            // caller's "is an instance configured" check passes.
            Some(InstanceSource::Inline(_)) => Some(PathBuf::from("<inline>")),
            None => None,
        }
    }

    pub fn inline_instance(&self) -> Option<Instance> {
        match &self.instance {
            Some(InstanceSource::Inline(inst)) => Some((**inst).clone()),
            _ => None,
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }
}
