//! Run manifests. The header is `#` comments (command, hashes, timings) and
//! the body is the full configuration, so a manifest can be passed back as
//! `--config` to repeat the run.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::{hex, PipelineConfig};

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

pub struct Manifest {
    command: String,
    started: Instant,
    inputs: Vec<(String, PathBuf, String)>,
    outputs: Vec<(String, PathBuf, String)>,
    notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), started: Instant::now(), inputs: Vec::new(), outputs: Vec::new(), notes: Vec::new() }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let digest = file_sha256(path)?;
        self.inputs.push((name.into(), path.to_path_buf(), digest));
        Ok(())
    }

    pub fn output(&mut self, name: &str, path: &Path) -> Result<()> {
        let digest = file_sha256(path)?;
        self.outputs.push((name.into(), path.to_path_buf(), digest));
        Ok(())
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn render(&self, cfg: &PipelineConfig) -> String {
        let mut out = String::new();
        out += &format!("# clmb {} manifest\n", self.command);
        out += &format!("# version: {}\n", env!("CARGO_PKG_VERSION"));
        out += &format!("# seed: {}\n", cfg.seed);
        out += &format!("# config_sha256: {}\n", cfg.sha256());
        for (name, path, digest) in &self.inputs {
            out += &format!("# input {name}: {} sha256={digest}\n", path.display());
        }
        for (name, path, digest) in &self.outputs {
            out += &format!("# output {name}: {} sha256={digest}\n", path.display());
        }
        for n in &self.notes {
            out += &format!("# note: {n}\n");
        }
        out += &format!("# duration_secs: {:.3}\n", self.started.elapsed().as_secs_f64());
        out += &cfg.to_text();
        out
    }

    /// Writes `manifest-<command>.txt` into `dir`.
    pub fn write(&self, dir: &Path, cfg: &PipelineConfig) -> Result<PathBuf> {
        let path = dir.join(format!("manifest-{}.txt", self.command));
        let mut f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(self.render(cfg).as_bytes())?;
        Ok(path)
    }
}
