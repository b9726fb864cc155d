use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance written next to every stage output. Paths are recorded relative to
/// the output directory and inputs by content hash, so reruns elsewhere match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub artifact_version: String,
    pub stage: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl StageManifest {
    pub fn new(stage: &str, config: serde_json::Value) -> Self {
        Self {
            artifact_version: mflkit::VERSION.to_string(),
            stage: stage.to_string(),
            config_hash: mflkit::hashing::hash_json(&config),
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> CliResult<Self> {
        self.inputs.insert(role.to_string(), mflkit::hashing::hash_file(path)?);
        Ok(self)
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    /// Hashes the listed files inside `dir` and writes `manifest.json` there.
    pub fn write(mut self, dir: &Path, outputs: &[&str]) -> CliResult<Self> {
        for name in outputs {
            self.outputs
                .insert(name.to_string(), mflkit::hashing::hash_file(dir.join(name))?);
        }
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(self)
    }
}
