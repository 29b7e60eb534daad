//! Persisted, checksummed experiment runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments::execute;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const REPORT_NAME: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    pub version: String,
    /// The only field that differs between identical runs.
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
    pub streams: BTreeMap<String, u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn entries(files: &BTreeMap<String, Vec<u8>>) -> Vec<FileEntry> {
    files
        .iter()
        .map(|(path, bytes)| FileEntry {
            path: path.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        })
        .collect()
}

/// Runs the experiment and writes its files, `report.json`, and
/// `manifest.json` into the configured output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let output = execute(cfg)?;
    let mut files = output.files;
    let report = serde_json::to_vec_pretty(&output.report).expect("reports serialize");
    files.insert(REPORT_NAME.into(), report);
    let dir = &cfg.output_dir;
    for (path, bytes) in &files {
        let full = dir.join(path);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(full, bytes)?;
    }
    let manifest = RunManifest {
        config: cfg.echo(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        files: entries(&files),
        streams: output.streams,
    };
    fs::write(
        dir.join(MANIFEST_NAME),
        serde_json::to_vec_pretty(&manifest).expect("manifests serialize"),
    )?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::MalformedLine { line: e.line(), message: e.to_string() })
}

/// Checks every listed file against its checksum. With `rerun`, the
/// configuration echoed in the manifest is executed again in memory and
/// the fresh checksums are compared as well.
pub fn verify(manifest_path: &Path, rerun: bool) -> Result<VerifyReport> {
    let manifest = read_manifest(manifest_path)?;
    let dir: PathBuf = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut mismatches = Vec::new();
    for e in &manifest.files {
        match fs::read(dir.join(&e.path)) {
            Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
            Ok(_) => mismatches.push(Mismatch { path: e.path.clone(), reason: "checksum differs".into() }),
            Err(err) => mismatches.push(Mismatch { path: e.path.clone(), reason: err.to_string() }),
        }
    }
    if rerun {
        let cfg = ExperimentConfig::from_echo(&manifest.config)?;
        let output = execute(&cfg)?;
        let mut files = output.files;
        files.insert(
            REPORT_NAME.into(),
            serde_json::to_vec_pretty(&output.report).expect("reports serialize"),
        );
        let fresh: BTreeMap<String, String> =
            entries(&files).into_iter().map(|e| (e.path, e.sha256)).collect();
        for e in &manifest.files {
            if fresh.get(&e.path) != Some(&e.sha256) {
                mismatches.push(Mismatch { path: e.path.clone(), reason: "rerun differs".into() });
            }
        }
        if fresh.len() != manifest.files.len() {
            mismatches.push(Mismatch { path: String::new(), reason: "rerun produced a different file set".into() });
        }
    }
    Ok(VerifyReport { checked: manifest.files.len(), mismatches })
}
