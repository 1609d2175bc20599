use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::registry::Method;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Service settings, read from a TOML file:
///
/// ```toml
/// host = "127.0.0.1"
/// port = 8080
/// registry = "models"        # directory of *.nn, *.bayes, *.apriori files
/// rules = "synthetic.rules"  # optional age/gender rules
/// store = "drafts.jsonl"     # append-only draft log
/// default_k = 3
/// default_method = "nn"
/// active = "v2"              # optional: model file stem to load instead of the newest
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub registry: PathBuf,
    pub rules: Option<PathBuf>,
    pub store: PathBuf,
    pub default_k: usize,
    pub default_method: Method,
    pub active: Option<String>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            registry: PathBuf::from("models"),
            rules: None,
            store: PathBuf::from("drafts.jsonl"),
            default_k: 3,
            default_method: Method::Nn,
            active: None,
        }
    }
}

pub const MAX_K: usize = 50;

impl ServeConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ServeConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=MAX_K).contains(&self.default_k) {
            return Err(ConfigError::Invalid(format!("default_k must be in 1..={MAX_K}")));
        }
        Ok(())
    }
}
