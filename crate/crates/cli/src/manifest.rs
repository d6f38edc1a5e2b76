//! Per-run record of what went in and what came out.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "offsim-run 1";

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self::of_bytes(path, &bytes))
    }

    fn of_bytes(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub train: u64,
    pub scenario: u64,
    pub train_scenario: u64,
    pub eval: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Seeds,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// UTC wall time the run finished; informational only.
    pub timestamp: String,
}

/// Collects inputs and outputs of one subcommand run.
pub struct Run {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(
        command: &str,
        args: Vec<String>,
        config: &offsim::Config,
        out_dir: &Path,
    ) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                format: MANIFEST_FORMAT,
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                args,
                config: serde_json::to_value(config)?,
                seeds: Seeds {
                    train: config.train.seed,
                    scenario: config.scenario.seed,
                    train_scenario: config.scenario.train_seed,
                    eval: config.scenario.eval_seeds.clone(),
                },
                inputs: Vec::new(),
                outputs: Vec::new(),
                timestamp: String::new(),
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(Artifact::of_file(path)?);
        Ok(())
    }

    /// Writes `bytes` to `path` and records it.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(Artifact::of_bytes(path, bytes));
        Ok(())
    }

    /// Writes `<command>_manifest.json` next to the outputs.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.timestamp = timestamp();
        let path = self.path(&format!(
            "{}_manifest.json",
            self.manifest.command.replace('-', "_")
        ));
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
fn timestamp() -> String {
    let time = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|secs| SystemTime::UNIX_EPOCH + std::time::Duration::from_secs(secs))
        .unwrap_or_else(SystemTime::now);
    humantime::format_rfc3339_seconds(time).to_string()
}
