//! Server settings: a TOML file whose keys mirror the command-line flags,
//! with flags taking precedence.
//!
//! ```toml
//! port = 8112
//! store = "file:/var/lib/e112"
//! fault_injection = false
//! operators = ["+302610000001"]
//!
//! [service]
//! cell_deg = 0.05
//! max_page = 100
//!
//! [service.delivery]
//! max_attempts = 3
//! base_backoff_ms = 200
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use e112_core::Config;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 8112;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StoreSpec {
    Memory,
    File(PathBuf),
}

impl FromStr for StoreSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "memory" => Ok(StoreSpec::Memory),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(StoreSpec::File(PathBuf::from(p))),
                _ => Err(format!("store must be `memory` or `file:<path>`, got {s:?}")),
            },
        }
    }
}

impl TryFrom<String> for StoreSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StoreSpec> for String {
    fn from(s: StoreSpec) -> Self {
        s.to_string()
    }
}

impl fmt::Display for StoreSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreSpec::Memory => f.write_str("memory"),
            StoreSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub port: u16,
    pub store: StoreSpec,
    /// Exposes the inspection endpoints and makes the push fake accept only
    /// devices registered through them.
    pub fault_injection: bool,
    /// Phone numbers provisioned as operator accounts. They still verify by SMS.
    pub operators: Vec<String>,
    /// Seed for the push fake's drop decisions.
    pub push_seed: u64,
    /// How often expired alerts are swept, in seconds.
    pub sweep_every_secs: u64,
    pub service: Config,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            store: StoreSpec::Memory,
            fault_injection: false,
            operators: Vec::new(),
            push_seed: 0,
            sweep_every_secs: 30,
            service: Config::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let text = std::fs::read_to_string(path).map_err(|source| SettingsError::Read { path: path.into(), source })?;
        Self::from_toml(&text).map_err(|source| SettingsError::Parse { path: path.into(), source })
    }
}
