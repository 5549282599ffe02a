use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory, '/'-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationSeed {
    pub well_width_nm: f64,
    pub master_seed: u64,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub realizations: Vec<RealizationSeed>,
    pub workers: usize,
    pub wall_clock_s: f64,
    pub files: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(cfg.canonical_json().as_bytes())
}

/// Collects every file a command writes so the manifest can list it.
#[derive(Debug)]
pub struct OutputWriter {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputWriter {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.push(OutputFile { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(path)
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| CliError::Numerical(format!("csv encoding: {e}"));
        w.write_record(header).map_err(wrap)?;
        for r in rows {
            w.write_record(r).map_err(wrap)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Numerical(format!("csv encoding: {e}")))?;
        self.write(rel, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    /// Write the manifest itself (not listed inside itself).
    pub fn finish(
        self,
        command: &str,
        cfg: &RunConfig,
        realizations: Vec<RealizationSeed>,
        workers: usize,
        wall_clock_s: f64,
    ) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_hash(cfg),
            config: cfg.clone(),
            realizations,
            workers,
            wall_clock_s,
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
        std::fs::write(self.root.join(format!("manifest_{command}.json")), text + "\n")?;
        Ok(manifest)
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}
