//! Run reports and the output directory with its content manifest.

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub measured: String,
    pub tolerance: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, pass: bool, measured: impl Into<String>, tolerance: impl Into<String>) -> Self {
        Self { name: name.into(), pass, measured: measured.into(), tolerance: tolerance.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckResult>,
    pub files: Vec<FileEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub all_pass: bool,
}

impl RunReport {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            checks: Vec::new(),
            files: Vec::new(),
            error: None,
            all_pass: false,
        }
    }

    pub fn finish(&mut self) {
        self.all_pass = self.error.is_none() && self.checks.iter().all(|c| c.pass);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(64);
    for b in Sha256::digest(bytes) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Writes files under one directory and records their digests.
pub struct OutputDir {
    root: PathBuf,
    pub files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(self.root.join(name), bytes)?;
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Buffers whatever `f` writes and stores it under `name`.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> CliResult<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut v = serde_json::to_vec_pretty(value)?;
        v.push(b'\n');
        self.write(name, &v)
    }
}
