//! Output bundles: CSV files plus a manifest listing every file with its SHA-256.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable naming the directory that relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "TWOSCALE_OUTPUT_ROOT";

pub fn resolve_output_dir(dir: &str) -> PathBuf {
    let p = Path::new(dir);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => Path::new(&root).join(p),
        None => Path::new("output").join(p),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub command: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub n_params: usize,
    pub n_obs: usize,
    /// Free-form `key = value` facts about the run.
    pub facts: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

/// A directory being filled with CSV files.
pub struct Bundle {
    pub dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Bundle {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Bundle { dir, files: Vec::new() })
    }

    /// Writes `rows` under `header`; floats use the shortest representation that reads back
    /// to the same value.
    pub fn write_csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(CliError::csv)?;
        let mut n = 0;
        for r in rows {
            w.write_record(r).map_err(CliError::csv)?;
            n += 1;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes, n)
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8], rows: usize) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: hex(&Sha256::digest(bytes)),
            rows,
        });
        Ok(path)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes `manifest.toml` listing every file written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf, CliError> {
        manifest.files = std::mem::take(&mut self.files);
        let text = toml::to_string(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.dir.join("manifest.toml");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}
