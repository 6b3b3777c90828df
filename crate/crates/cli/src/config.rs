use std::path::Path;

use serde::Deserialize;

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

/// Versioned key-value settings. Command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub version: u32,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub shots: Option<usize>,
    pub method: Option<String>,
    pub window: Option<usize>,
    pub negatives: Option<usize>,
    pub scheme: Option<String>,
    pub arch: Option<String>,
    pub alphabet: Option<String>,
    pub qubits: Option<usize>,
    pub layers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Input(format!(
                "{}: config version {} (expected {CONFIG_VERSION})",
                path.display(),
                cfg.version
            )));
        }
        Ok(cfg)
    }
}
