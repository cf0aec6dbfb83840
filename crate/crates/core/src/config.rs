//! TOML experiment configuration.
//!
//! Every section is optional and falls back to the default experiment.
//! Unknown keys are rejected during parsing; value invariants are checked
//! afterwards so the error names the dotted key that failed.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::ConfigMissing(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    parse_config_str(&text, path)
}

/// Parses config text; `origin` is only used in error messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// Serialises a config to TOML text that [`parse_config_str`] accepts.
pub fn to_toml_string(config: &ExperimentConfig) -> Result<String> {
    toml::to_string(config)
        .map_err(|e| Error::Internal(format!("config serialisation failed: {e}")))
}

pub fn write_config(path: &Path, config: &ExperimentConfig) -> Result<()> {
    let text = to_toml_string(config)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
