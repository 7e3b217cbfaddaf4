//! TOML run descriptions: problem, tiling, machine and optional expectations.
//!
//! ```toml
//! [problem]
//! m = 64
//! n = 64
//! k = 64
//!
//! [tile]
//! m = 8
//! n = 16
//! k = 4
//!
//! [subtile]
//! m = 8
//! n = 4
//! k = 4
//! bcast = 4
//!
//! [machine]
//! cores = 2
//!
//! [expected]
//! mem_vrf_total = 53248
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{validate, ConfigError, MachineConfig, ProblemShape, SubTileConfig, TileConfig, Validated};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub problem: ProblemShape,
    pub tile: TileConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtile: Option<SubTileConfig>,
    #[serde(default)]
    pub machine: MachineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

/// Reference values a run is checked against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub mem_vrf_total: Option<u64>,
    /// Rounded to two decimals before comparing.
    pub arithmetic_intensity: Option<f64>,
    /// MACs per computational instruction.
    pub simd_ratio: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<ConfigError>),
}

fn join(errors: &[ConfigError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigFileError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigFileError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<Validated, ConfigFileError> {
        validate(self.problem, self.tile, self.subtile, &self.machine).map_err(ConfigFileError::Invalid)
    }
}
