//! TOML configuration with four sections: `pipeline`, `scanner_backend`,
//! `locator_backend` and `oracle`. Every key is optional; a section only
//! overrides the keys it names.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{BackendConfig, OracleConfig};
use crate::pipeline::PipelineConfig;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub scanner_backend: BackendConfig,
    pub locator_backend: BackendConfig,
    pub oracle: OracleConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            scanner_backend: BackendConfig::scanner_defaults(),
            locator_backend: BackendConfig::locator_defaults(),
            oracle: OracleConfig::default(),
        }
    }
}

// Overlays the keys of `section` onto `base`, so partial sections keep the
// section-specific defaults rather than the type's.
fn overlay<T: Clone + Serialize + DeserializeOwned>(base: &T, section: Option<toml::Value>, name: &str) -> Result<T, ConfigFileError> {
    let Some(section) = section else {
        return Ok(base.clone());
    };
    let toml::Value::Table(user) = section else {
        return Err(ConfigFileError::Parse(format!("[{name}] must be a table")));
    };
    let mut merged = match toml::Value::try_from(base) {
        Ok(toml::Value::Table(t)) => t,
        _ => toml::Table::new(),
    };
    merged.extend(user);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigFileError::Parse(format!("[{name}]: {}", e.message())))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigFileError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigFileError::Parse(e.to_string()))?;
        let defaults = Config::default();
        let config = Config {
            pipeline: overlay(&defaults.pipeline, table.remove("pipeline"), "pipeline")?,
            scanner_backend: overlay(&defaults.scanner_backend, table.remove("scanner_backend"), "scanner_backend")?,
            locator_backend: overlay(&defaults.locator_backend, table.remove("locator_backend"), "locator_backend")?,
            oracle: overlay(&defaults.oracle, table.remove("oracle"), "oracle")?,
        };
        if let Some(key) = table.keys().next() {
            return Err(ConfigFileError::Parse(format!("unknown section or key `{key}`")));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Checks the pipeline and oracle sections. Backends are checked only
    /// when live mode builds them.
    pub fn validate(&self) -> Result<(), ConfigFileError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        self.oracle.validate().map_err(ConfigFileError::Invalid)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
