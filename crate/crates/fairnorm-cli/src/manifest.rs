//! Run manifests: every command writes one before doing any work, so a
//! crashed or interrupted run still leaves a record of what was attempted.
//! The manifest carries the fully resolved configuration, content hashes of
//! all input files, and the complete list of files the command will write.
//! Nothing in it depends on wall-clock time.

use fairnorm_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Fully resolved configuration; the run is reproducible from this.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputHash>,
    pub out_dir: String,
    /// Files the command will write into out_dir, besides manifest.json.
    pub outputs: Vec<String>,
    pub threads: usize,
}

pub fn hash_file(path: &Path) -> Result<InputHash> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputHash {
        path: path.display().to_string(),
        sha256: hex,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Create the output directory and serialize the manifest into it. Called
/// before the command does any real work.
pub fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    write_json(&out_dir.join("manifest.json"), manifest)
}
