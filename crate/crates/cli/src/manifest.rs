use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_snapshot: Value,
    /// SHA-256 of each input file, keyed by the path as given.
    pub input_hashes: BTreeMap<String, String>,
    pub output_paths: Vec<String>,
    pub output_hashes: BTreeMap<String, String>,
    /// HTTP requests the process attempted; zero for offline backends.
    pub network_requests: u64,
    pub started: String,
    pub finished: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_tree(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.file_name().unwrap_or_default().as_encoded_bytes());
        h.update([0]);
        h.update(hash_tree(&e)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

pub struct Recorder {
    command: String,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    started: DateTime<Utc>,
}

impl Recorder {
    pub fn new(command: &str, config: Value) -> Self {
        Recorder {
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Utc::now(),
        }
    }

    /// Record an input file or directory; missing paths are skipped.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.exists() {
            self.inputs.insert(path.display().to_string(), hash_tree(path)?);
        }
        Ok(())
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(self, dest: &Path) -> Result<RunManifest> {
        let mut output_hashes = BTreeMap::new();
        for p in &self.outputs {
            if p.is_file() {
                output_hashes.insert(p.display().to_string(), sha256_file(p)?);
            }
        }
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_snapshot: self.config,
            input_hashes: self.inputs,
            output_paths: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            output_hashes,
            network_requests: mediaprofile::elicitation::http_requests_attempted(),
            started: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        };
        if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(dest, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", dest.display()))?;
        Ok(manifest)
    }
}
