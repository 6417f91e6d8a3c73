//! Run manifests: one JSON file written next to every subcommand's outputs,
//! recording resolved flags, input hashes, output paths, and duration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Resolved flag values, as a flat JSON object.
    pub flags: serde_json::Value,
    pub seed: u64,
    /// SHA-256 per input file, keyed by path as given.
    pub input_hashes: BTreeMap<String, String>,
    /// Artifact paths written by the run.
    pub outputs: Vec<String>,
    pub duration_ms: u64,
}

/// Collects manifest data over the lifetime of one subcommand run.
pub struct ManifestBuilder {
    subcommand: String,
    flags: serde_json::Value,
    seed: u64,
    input_hashes: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, flags: serde_json::Value, seed: u64) -> Self {
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            flags,
            seed,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)
            .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.input_hashes.insert(path.display().to_string(), hex);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn write(self, dir: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            flags: self.flags,
            seed: self.seed,
            input_hashes: self.input_hashes,
            outputs: self.outputs,
            duration_ms: self.started.elapsed().as_millis() as u64,
        };
        let path = dir.join("manifest.json");
        let mut body = serde_json::to_string_pretty(&manifest)?;
        body.push('\n');
        crate::io::features::atomic_write(&path, body.as_bytes())?;
        Ok(path)
    }
}
