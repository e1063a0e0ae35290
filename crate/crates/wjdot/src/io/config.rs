//! Experiment configuration: JSON schema validated before any compute runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptConfig;
use crate::nn::{NetDims, TrainConfig};
use crate::{Error, Result};

/// Everything an experiment run needs: where the data comes from (a named
/// synthetic scenario or a list of dataset files), model and training
/// hyperparameters, the adaptation settings, the evaluation seeds, and where
/// the outputs go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Named synthetic scenario; mutually exclusive with `dataset_paths`.
    #[serde(default)]
    pub scenario: Option<String>,
    /// Dataset files (one domain per file); each labeled domain is held out
    /// in turn as the target while the rest serve as sources.
    #[serde(default)]
    pub dataset_paths: Vec<PathBuf>,
    #[serde(default)]
    pub net: NetDims,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    /// One full evaluation per seed.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.scenario, self.dataset_paths.is_empty()) {
            (Some(_), false) => {
                return Err(Error::Config(
                    "set either a scenario name or dataset paths, not both".into(),
                ))
            }
            (None, true) => {
                return Err(Error::Config(
                    "set a scenario name or at least one dataset path".into(),
                ))
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("the seed list is empty".into()));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("training batch size must be at least 1".into()));
        }
        if self.net.embedding == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        self.adapt
            .validate()
            .map_err(|e| Error::Config(format!("adaptation settings: {e}")))
    }

    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))?;
        fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}
