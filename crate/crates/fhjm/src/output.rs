//! Output files, CSV formatting and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Round-trip exact decimal form of an `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Writer that hashes and counts what passes through it.
pub struct TrackedFile {
    name: String,
    path: PathBuf,
    inner: BufWriter<File>,
    hasher: Sha256,
    bytes: u64,
}

impl TrackedFile {
    pub fn line(&mut self, text: &str) -> Result<(), CliError> {
        self.write_str(text)?;
        self.write_str("\n")
    }

    pub fn write_str(&mut self, text: &str) -> Result<(), CliError> {
        self.hasher.update(text.as_bytes());
        self.bytes += text.len() as u64;
        self.inner
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(&self.path, e))
    }

    fn finish(mut self) -> Result<OutputRecord, CliError> {
        self.inner.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(OutputRecord {
            file: self.name,
            sha256: hex(&self.hasher.finalize()),
            bytes: self.bytes,
        })
    }
}

/// Output directory of one command run.
pub struct OutputDir {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            records: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn open(&self, name: &str) -> Result<TrackedFile, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(TrackedFile {
            name: name.into(),
            path,
            inner: BufWriter::new(file),
            hasher: Sha256::new(),
            bytes: 0,
        })
    }

    pub fn close(&mut self, file: TrackedFile) -> Result<(), CliError> {
        self.records.push(file.finish()?);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report serialises");
        text.push('\n');
        let mut f = self.open(name)?;
        f.write_str(&text)?;
        self.close(f)
    }

    /// Writes `<command>.manifest.json` listing every file written so far.
    pub fn write_manifest(&mut self, command: &str, config: &ExperimentConfig) -> Result<(), CliError> {
        let canonical = config.canonical_json();
        let mc = config.monte_carlo.as_ref();
        let manifest = Manifest {
            tool: "fhjm",
            tool_version: env!("CARGO_PKG_VERSION"),
            core_version: fhjm_core::VERSION,
            command,
            config_sha256: sha256_hex(canonical.as_bytes()),
            config: serde_json::from_str(&canonical).expect("canonical config is JSON"),
            seed: mc.map(|m| m.seed).or(config.consistency.as_ref().map(|c| c.seed)),
            n_paths: mc.map(|m| m.n_paths),
            outputs: &self.records,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        let path = self.dir.join(format!("{command}.manifest.json"));
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    tool_version: &'static str,
    core_version: &'static str,
    command: &'a str,
    config_sha256: String,
    config: serde_json::Value,
    seed: Option<u64>,
    n_paths: Option<usize>,
    outputs: &'a [OutputRecord],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -1.5, 1.0 / 3.0, 6.02e23, f64::MIN_POSITIVE, -0.030000000000000002] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
