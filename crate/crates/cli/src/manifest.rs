use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one completed command; its presence marks the run as finished.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the serialized configuration snapshot.
    pub config_hash: String,
    pub checkpoints: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at: u64,
    pub finished_at: u64,
    pub code_version: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub summary: serde_json::Map<String, serde_json::Value>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Tracks the files a command produces under its run directory.
pub struct Run {
    pub dir: PathBuf,
    command: String,
    config_hash: String,
    started_at: u64,
    checkpoints: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl Run {
    /// Creates the run directory and writes the configuration snapshot.
    pub fn start(command: &str, cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.out.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        let snapshot = cfg.to_toml();
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, &snapshot).map_err(|e| CliError::io(path.display(), e))?;
        // a stale manifest would claim an unfinished run is complete
        let _ = fs::remove_file(dir.join(MANIFEST_FILE));
        Ok(Self {
            command: command.to_string(),
            config_hash: sha256_hex(snapshot.as_bytes()),
            started_at: now(),
            checkpoints: Vec::new(),
            outputs: vec![path],
            summary: serde_json::Map::new(),
            dir,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().to_path_buf());
    }

    pub fn checkpoint(&mut self, path: impl AsRef<Path>) {
        self.checkpoints.push(path.as_ref().to_path_buf());
    }

    pub fn write_file(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(path.display(), e))?;
        self.output(&path);
        Ok(path)
    }

    /// Writes the manifest; must be the last write of a command.
    pub fn finish(self) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: self.command,
            config_hash: self.config_hash,
            checkpoints: self.checkpoints,
            outputs: self.outputs,
            started_at: self.started_at,
            finished_at: now(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            summary: self.summary,
        };
        let path = self.dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| CliError::io(path.display(), e))?;
        Ok(manifest)
    }
}
