//! Run manifests and the file helpers every command shares.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Everything needed to reproduce a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_sha256(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }
}

/// Output directory plus the manifest being assembled for it.
pub struct OutDir {
    root: PathBuf,
    pub manifest: RunManifest,
}

impl OutDir {
    pub fn create(root: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    /// Pretty JSON tagged with the manifest file name.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut v = serde_json::to_value(value).map_err(blockecho::Error::from)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("manifest".into(), MANIFEST_FILE.into());
        }
        let text = serde_json::to_string_pretty(&v).map_err(blockecho::Error::from)?;
        self.write_text(name, &(text + "\n"))
    }

    pub fn finish(mut self, wall_time_secs: f64) -> Result<RunManifest> {
        self.manifest.wall_time_secs = wall_time_secs;
        let text = serde_json::to_string_pretty(&self.manifest).map_err(blockecho::Error::from)?;
        let path = self.path(MANIFEST_FILE);
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}
