//! Layered configuration: built-in defaults, then a TOML file, then flags.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use semrec_core::optim::TrainConfig;
use semrec_core::synth::SynthConfig;
use semrec_profilegen::{GenerationConfig, ServiceConfig};

use crate::UsageError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    /// `tsv` or `jsonl`; guessed from the extension when absent.
    pub format: Option<String>,
    pub min_rating: Option<f64>,
    /// k-core threshold; 0 disables filtering.
    pub kcore: usize,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            format: None,
            min_rating: None,
            kcore: 5,
            seed: 0,
        }
    }
}

/// Everything a configuration file may set, one table per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub prepare: PrepareConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub generation: GenerationConfig,
    pub service: ServiceConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))
            .map_err(Into::into)
    }
}

/// Overwrites `target` with `flag` when the flag was given.
pub fn set<T>(target: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *target = v;
    }
}
