use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use tracing::warn;

use super::ElicitedResponse;
use crate::error::{Error, Result};

/// Responses keyed by prompt content hash.
///
/// Reads are concurrent; writes are serialized and, for a file-backed cache,
/// appended to a JSON-lines log as they happen. A later entry for the same
/// hash supersedes an earlier one on reload.
#[derive(Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, ElicitedResponse>>,
    log: Mutex<Option<(PathBuf, BufWriter<File>)>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load `path` if it exists and append new entries to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ElicitedResponse>(&line) {
                    Ok(r) => {
                        entries.insert(r.content_hash.clone(), r);
                    }
                    Err(e) => warn!("{}:{}: skipping unreadable cache line: {e}", path.display(), n + 1),
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            log: Mutex::new(Some((path.to_path_buf(), BufWriter::new(file)))),
        })
    }

    /// Cached response for `content_hash` produced by `model_id`.
    pub fn lookup(&self, content_hash: &str, model_id: &str) -> Option<ElicitedResponse> {
        self.entries
            .read()
            .unwrap()
            .get(content_hash)
            .filter(|r| r.model_id == model_id)
            .cloned()
    }

    pub fn store(&self, response: ElicitedResponse) -> Result<()> {
        let mut log = self.log.lock().unwrap();
        if let Some((path, w)) = log.as_mut() {
            let line = serde_json::to_string(&response)?;
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path.clone(), e))?;
        }
        self.entries
            .write()
            .unwrap()
            .insert(response.content_hash.clone(), response);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries sorted by content hash.
    pub fn snapshot(&self) -> Vec<ElicitedResponse> {
        let mut all: Vec<_> = self.entries.read().unwrap().values().cloned().collect();
        all.sort_by(|a, b| a.content_hash.cmp(&b.content_hash));
        all
    }
}
