//! Per-command provenance records.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use latent_throw::config::ExperimentConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a ExperimentConfig,
    inputs: &'a [FileDigest],
    outputs: &'a [FileDigest],
}

#[derive(Debug, Serialize)]
struct Timing<'a> {
    command: &'a str,
    wall_seconds: f64,
    threads: usize,
    extra: &'a [(String, f64)],
}

/// Collects inputs and outputs of one command; paths are recorded relative
/// to the output directory so manifests from different directories compare
/// equal.
pub struct Recorder {
    command: &'static str,
    out_dir: PathBuf,
    start: Instant,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    pub timings: Vec<(String, f64)>,
}

impl Recorder {
    pub fn new(command: &'static str, out_dir: &Path) -> Self {
        Recorder {
            command,
            out_dir: out_dir.to_path_buf(),
            start: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.out_dir).unwrap_or(path).display().to_string()
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: self.label(path),
            sha256: sha256_hex(bytes),
        });
    }

    /// Writes `bytes` to `path` and records the digest.
    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
        self.outputs.push(FileDigest {
            path: self.label(path),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Writes the manifest and the timing file. The output directory is left
    /// out of the recorded config: it names a location, not an experiment.
    pub fn finish(self, cfg: &ExperimentConfig) -> std::io::Result<()> {
        let cfg = &ExperimentConfig {
            output_dir: String::new(),
            ..cfg.clone()
        };
        let config_json = serde_json::to_string(cfg).map_err(std::io::Error::other)?;
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.rng_seed,
            config_sha256: sha256_hex(config_json.as_bytes()),
            config: cfg,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let timing = Timing {
            command: self.command,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            extra: &self.timings,
        };
        write_json(&self.out_dir.join(format!("manifest_{}.json", self.command)), &manifest)?;
        write_json(&self.out_dir.join(format!("timing_{}.json", self.command)), &timing)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> std::io::Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    s.push('\n');
    Ok(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_json(value)?)
}
