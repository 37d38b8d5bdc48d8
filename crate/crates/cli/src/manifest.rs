//! Run manifests: config echo, per-check outcomes and content hashes of
//! every emitted file, written atomically at the end of a run.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    /// false when an enumeration hit its cap and the verdict is partial
    pub complete: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub version: String,
    pub config: RunConfig,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub checks: Vec<CheckResult>,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
}

pub struct ManifestBuilder {
    config: RunConfig,
    started: u64,
    checks: Vec<CheckResult>,
    files: Vec<FileEntry>,
    notes: Vec<String>,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl ManifestBuilder {
    pub fn new(config: &RunConfig) -> ManifestBuilder {
        ManifestBuilder {
            config: config.clone(),
            started: now_unix(),
            checks: Vec::new(),
            files: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, result: CheckResult) {
        self.checks.push(result);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Registers an emitted file, hashing its current contents.
    pub fn file(&mut self, path: &Path) -> Result<()> {
        let bytes =
            std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.files.push(FileEntry { path: path.display().to_string(), sha256: hex });
        Ok(())
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Writes the manifest atomically into the output directory.
    pub fn write(self, out_dir: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            schema: MANIFEST_SCHEMA,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            started_unix: self.started,
            finished_unix: now_unix(),
            checks: self.checks,
            files: self.files,
            notes: self.notes,
        };
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest.json");
        let tmp = out_dir.join("manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
