//! Reproducibility manifest: config hash, seed, versions, and the digest of
//! every input read and output written. No timestamps, so re-runs are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default)]
pub struct Manifest {
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<(PathBuf, String)>,
}

impl Manifest {
    /// Reads a file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let data = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push((path.to_path_buf(), sha256_hex(&data)));
        Ok(data)
    }

    /// Writes a file (creating parent directories) and records its digest.
    pub fn write(&mut self, path: &Path, data: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(path, data).map_err(|e| CliError::io(path, e))?;
        self.outputs.push((path.to_path_buf(), sha256_hex(data)));
        Ok(())
    }

    pub fn render(&self, command: &str, seed: u64, canonical_config: &str) -> String {
        let mut s = String::new();
        s.push_str(&format!("command = {command}\n"));
        s.push_str(&format!("phirat_cli = {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("phirat_core = {}\n", phirat_core::VERSION));
        s.push_str(&format!("seed = {seed}\n"));
        s.push_str(&format!("config_sha256 = {}\n", sha256_hex(canonical_config.as_bytes())));
        for (p, h) in &self.inputs {
            s.push_str(&format!("input {} = {h}\n", p.display()));
        }
        for (p, h) in &self.outputs {
            s.push_str(&format!("output {} = {h}\n", p.display()));
        }
        s.push_str("\n[config]\n");
        s.push_str(canonical_config);
        s
    }
}
