//! Run manifests: a JSON record written next to every command's outputs
//! with enough detail to reproduce the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Echo of the effective configuration (after config-file merging).
    pub config: BTreeMap<String, serde_json::Value>,
    /// SHA-256 of the dataset files, when the command consumed one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
    /// SHA-256 of the model file, when the command consumed or produced one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_fingerprint: Option<String>,
    /// Filters per layer, bottom first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_filters: Option<Vec<usize>>,
    pub timings_ms: BTreeMap<String, u128>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: BTreeMap::new(),
            dataset_fingerprint: None,
            model_fingerprint: None,
            layer_filters: None,
            timings_ms: BTreeMap::new(),
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.config.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable config value"),
        );
    }

    pub fn timing(&mut self, phase: &str, elapsed: std::time::Duration) {
        self.timings_ms.insert(phase.to_string(), elapsed.as_millis());
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write `<out>.manifest.json` next to the command's primary output.
    pub fn write_alongside(&self, primary_output: &Path) -> Result<PathBuf> {
        self.write_to(manifest_path(primary_output))
    }

    pub fn write_to(&self, path: PathBuf) -> Result<PathBuf> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json)
            .with_context(|| format!("cannot write manifest {}", path.display()))?;
        Ok(path)
    }
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary_output.with_file_name(name)
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn fingerprint_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot fingerprint {}", path.display()))?;
    Ok(hex_digest(&bytes))
}

/// SHA-256 over a directory's files (sorted by name), hex-encoded.
pub fn fingerprint_dir(path: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut hasher = Sha256::new();
    for file in files {
        hasher.update(file.file_name().unwrap_or_default().to_string_lossy().as_bytes());
        hasher.update(std::fs::read(&file)?);
    }
    Ok(hex_encode(&hasher.finalize()))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    hex_encode(&Sha256::digest(bytes))
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
