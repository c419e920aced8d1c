use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;
use crate::experiments::{Experiment, Plan};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; results never depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, parameters: Map<String, Value>, seed: u64, output_dir: PathBuf) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.name().to_string(),
            parameters,
            seed,
            output_dir,
            threads: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                config.schema_version
            )));
        }
        if config.threads == Some(0) {
            return Err(CliError::Usage("threads: must be positive".into()));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parses and range-checks the parameters for the named experiment.
    pub fn plan(&self) -> Result<Plan, CliError> {
        let experiment: Experiment = self.experiment.parse()?;
        Plan::parse(experiment, &self.parameters)
    }
}
