//! Run directories: resolved config, manifest, metric tables, checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    Ok(sha256_hex(&bytes))
}

/// One output directory; files are recorded as they are written and hashed
/// into the manifest at the end.
pub struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    /// `explicit` if given, otherwise `<output_root>/<command>-<config hash>`.
    pub fn create(command: &str, config: &ExperimentConfig, explicit: Option<&Path>) -> Result<Self, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let hash = sha256_hex(config.to_toml().as_bytes());
                config.output_root.join(format!("{command}-{}", &hash[..12]))
            }
        };
        fs::create_dir_all(&path).map_err(|e| CliError::io(path.display(), e))?;
        let mut dir = Self { path, files: Vec::new() };
        dir.write(CONFIG_FILE, config.to_toml().as_bytes())?;
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.file(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(p.display(), e))?;
        self.record(name);
        Ok(p)
    }

    /// Marks a file written by someone else as part of the run.
    pub fn adopt(&mut self, name: &str) {
        self.record(name);
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<PathBuf, CliError> {
        let p = self.file(name);
        let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(p.display(), e))?;
        self.record(name);
        Ok(p)
    }

    /// Writes `manifest.json` listing the command, seeds, inputs and the
    /// hash of every output file.
    pub fn finish(
        &mut self,
        command: &str,
        config: &ExperimentConfig,
        seeds: &[u64],
        inputs: &[(&str, &Path)],
    ) -> Result<PathBuf, CliError> {
        let mut outputs = serde_json::Map::new();
        for f in &self.files {
            outputs.insert(f.clone(), json!(sha256_file(&self.file(f))?));
        }
        let mut ins = serde_json::Map::new();
        for (name, p) in inputs {
            ins.insert(
                (*name).to_string(),
                json!({ "path": p.display().to_string(), "sha256": sha256_file(p)? }),
            );
        }
        let manifest = json!({
            "tool": "ossl",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": CONFIG_FILE,
            "config_sha256": sha256_hex(config.to_toml().as_bytes()),
            "seeds": seeds,
            "inputs": ins,
            "outputs": outputs,
        });
        self.write_json(MANIFEST_FILE, &manifest)
    }
}

/// Appends CSV rows one at a time so an aborted run keeps what it logged.
pub struct CsvStream {
    writer: csv::Writer<fs::File>,
}

impl CsvStream {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let writer = csv::Writer::from_path(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
        Ok(Self { writer })
    }

    pub fn push<S: Serialize>(&mut self, row: &S) -> Result<(), CliError> {
        self.writer.serialize(row).map_err(|e| CliError::Other(e.to_string()))?;
        self.writer.flush().map_err(|e| CliError::io("metrics", e))
    }
}
