use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce one invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config_path: PathBuf,
    /// SHA-256 of the config file bytes, hex encoded.
    pub config_sha256: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub params: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        subcommand: &'static str,
        config: &LoadedConfig,
        output_dir: &Path,
        seed: u64,
        params: serde_json::Value,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_path: config.path.clone(),
            config_sha256: config.sha256.clone(),
            output_dir: output_dir.to_path_buf(),
            seed,
            params,
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let json =
            serde_json::to_vec_pretty(self).map_err(|e| CliError::Validation(e.to_string()))?;
        sonar_tbd::io::write_atomic(&dir.join(MANIFEST_FILE), |w| {
            w.write_all(&json)?;
            w.write_all(b"\n")
        })?;
        Ok(())
    }
}

/// A parsed config together with the hash of its source text.
#[derive(Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub sha256: String,
    pub pipeline: sonar_tbd::pipeline::PipelineConfig,
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::Config(format!("{}: not UTF-8: {e}", path.display())))?;
    let pipeline = sonar_tbd::config::parse_config(text).map_err(|e| match e {
        sonar_tbd::Error::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other.into(),
    })?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        pipeline,
    })
}
