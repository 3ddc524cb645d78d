//! Per-stage provenance records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::Loaded;
use crate::error::Result;
use crate::io;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Content hashes of a stage's inputs and outputs. Everything except
/// `wall_time_s` is a pure function of inputs, configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

/// Collects input and output files while a stage runs.
#[derive(Debug)]
pub struct Recorder {
    stage: String,
    start: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(stage: &str) -> Self {
        Self { stage: stage.to_string(), start: Instant::now(), inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, p: impl AsRef<Path>) {
        self.inputs.push(p.as_ref().to_path_buf());
    }

    pub fn output(&mut self, p: impl AsRef<Path>) {
        self.outputs.push(p.as_ref().to_path_buf());
    }

    /// Hashes every recorded file and writes `manifest.json` into `dir`.
    pub fn finish(self, cfg: &Loaded, dir: &Path) -> Result<Manifest> {
        let hash_all = |files: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            files.iter().map(|p| Ok((cfg.display_path(p), io::sha256_file(p)?))).collect()
        };
        let manifest = Manifest {
            stage: self.stage,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed(),
            config_hash: cfg.hash.clone(),
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}
