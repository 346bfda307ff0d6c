use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{self, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(error::io(path))?))
}

/// `git describe`-style build identifier.
pub fn version() -> String {
    env!("STORYLINE_VERSION").to_string()
}

/// Provenance of one run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Hash of the resolved `config.txt`.
    pub config_hash: String,
    /// Input label to file hash.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to file hash.
    pub outputs: BTreeMap<String, String>,
    /// Split sizes, record counts and similar tallies.
    pub counts: BTreeMap<String, usize>,
    pub lineage: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Manifest {
            command: command.into(),
            version: version(),
            seed: cfg.seed,
            config_hash: sha256_hex(cfg.render().as_bytes()),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            lineage: None,
        }
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.insert(label.into(), file_hash(path)?);
        Ok(())
    }

    /// Records the hash of `name` inside `dir`.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs
            .insert(name.into(), file_hash(&dir.join(name))?);
        Ok(())
    }

    /// Writes `config.txt` and `manifest.json` into `dir`.
    pub fn finish(&self, dir: &Path, cfg: &RunConfig) -> Result<()> {
        error::write(&dir.join(CONFIG_FILE), cfg.render())?;
        let json = serde_json::to_string_pretty(self).expect("manifest serialises");
        error::write(&dir.join(MANIFEST_FILE), json + "\n")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        serde_json::from_str(&error::read_to_string(&path)?)
            .map_err(|e| Error::format(&path, e.to_string()))
    }
}
