//! Dataset, report and manifest emission.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub outputs: Vec<OutputFile>,
    pub wall_clock_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files in a directory and records their checksums.
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> io::Result<()> {
        fs::write(self.dir.join(name), &bytes)?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Header names carry their unit as a suffix (`_s`, `_hz`, `_rad`, ...).
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(io::Error::other)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(row).map_err(io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        self.write(name, bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write(name, bytes)
    }

    pub fn manifest(&self, manifest: &RunManifest) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(manifest).map_err(io::Error::other)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)
    }
}

/// Shortest round-trip form, so identical values give identical bytes.
/// Very small or large magnitudes use an exponent.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}
