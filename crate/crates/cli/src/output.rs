//! Output files and the run manifest.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Kind;
use crate::error::CliError;

/// Files produced by a run, held in memory until the run is complete so a
/// failed run never leaves half of its outputs behind.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        for row in rows {
            w.write_record(row).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn text(&mut self, name: &str, s: String) {
        self.files.push((name.to_string(), s.into_bytes()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file into `dir` and returns their digests in write order.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<OutputDigest>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut out = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            out.push(OutputDigest {
                file: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            });
        }
        Ok(out)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Formats a float for CSV: shortest representation that reads back to the
/// same value.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub kind: Kind,
    pub seed: u64,
    pub threads: usize,
    pub exit_code: i32,
    pub failed_checks: Vec<String>,
    pub config_sha256: String,
    pub config: String,
    pub outputs: Vec<OutputDigest>,
    /// The only field that differs between identical runs.
    pub wall_time_s: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";
