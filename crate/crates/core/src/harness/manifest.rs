//! Output manifest written next to every command's artifacts: config
//! fingerprint, seeds, versions, inputs, outputs, and row counts.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub derived_seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, root_seed: u64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            root_seed,
            derived_seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, role: &str, value: u64) -> Self {
        self.derived_seeds.insert(role.into(), value);
        self
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn count(mut self, name: &str, value: u64) -> Self {
        self.counts.insert(name.into(), value);
        self
    }

    /// Write as `manifest_<command>.json` in the output directory.
    pub fn write(&self, out_dir: &Path) -> Result<std::path::PathBuf> {
        let path = out_dir.join(format!("manifest_{}.json", self.command));
        let file = std::fs::File::create(&path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(path)
    }
}
