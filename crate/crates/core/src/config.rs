//! Flat key-value configuration.
//!
//! Every field of the cost model, channel, queue, reward and environment
//! options is a top-level key named after the field (`l_tail_ms`, `sigma`,
//! `rho`, …); generator and training settings live under `scenario.*` and
//! `train.*`. Files use TOML syntax. Precedence: `--set key=value`
//! overrides, then the file, then the embedded defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::agent::TrainConfig;
use crate::channel::ChannelModel;
use crate::env::{EnvOptions, LinkSource, RewardParams};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::queue::QueueModel;
use crate::scenario::GeneratorParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    #[serde(flatten)]
    pub system: SystemParams,
    #[serde(flatten)]
    pub channel: ChannelModel,
    #[serde(flatten)]
    pub queue: QueueModel,
    #[serde(flatten)]
    pub reward: RewardParams,
    #[serde(flatten)]
    pub env: EnvOptions,
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
}

/// Synthetic generator settings plus the sizes and seeds of the training
/// and evaluation traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub generator: GeneratorParams,
    pub frames: usize,
    pub seed: u64,
    pub train_frames: usize,
    pub train_seed: u64,
    /// Link seeds used by `eval`, one replay of the trace per seed.
    pub eval_seeds: Vec<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorParams::default(),
            frames: 10_000,
            seed: 202,
            train_frames: 2_000,
            train_seed: 101,
            eval_seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate().map_err(as_config)?;
        if self.frames == 0 || self.train_frames == 0 {
            return Err(Error::Config(
                "scenario.frames and scenario.train_frames must be positive".into(),
            ));
        }
        if self.eval_seeds.is_empty() {
            return Err(Error::Config(
                "scenario.eval_seeds must not be empty".into(),
            ));
        }
        Ok(())
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.channel.validate().map_err(as_config)?;
        self.queue.validate().map_err(as_config)?;
        self.reward.validate()?;
        self.scenario.validate()?;
        self.train.validate()
    }

    pub fn link(&self) -> LinkSource {
        LinkSource::Sampled {
            channel: self.channel,
            queue: self.queue,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults, then `file` (if any), then `overrides` (`key=value`).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = defaults_tree()?;
        if let Some(path) = file {
            let text = fs::read_to_string(path)?;
            let table: Table = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut tree, table, "")?;
        }
        for item in overrides {
            let (key, value) = parse_override(item)?;
            set_path(&mut tree, &key, value)?;
        }
        let config: Config = Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

fn defaults_tree() -> Result<Table> {
    match Value::try_from(Config::default()) {
        Ok(Value::Table(t)) => Ok(t),
        Ok(_) => Err(Error::Config(
            "defaults did not serialize to a table".into(),
        )),
        Err(e) => Err(Error::Config(e.to_string())),
    }
}

/// Overlays `src` onto `dst`, rejecting keys the defaults do not define.
fn merge(dst: &mut Table, src: Table, prefix: &str) -> Result<()> {
    for (key, value) in src {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (dst.get_mut(&key), value) {
            (None, _) => return Err(Error::Config(format!("unknown config key `{path}`"))),
            (Some(Value::Table(d)), Value::Table(s)) => merge(d, s, &path)?,
            (Some(Value::Table(_)), _) => {
                return Err(Error::Config(format!("`{path}` is a section, not a value")))
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

fn parse_override(item: &str) -> Result<(String, Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    // Bare words (e.g. `latency_composition=additive`) are taken as strings.
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

fn set_path(tree: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap_or_default();
    let mut node = tree;
    for p in parts {
        node = match node.get_mut(p) {
            Some(Value::Table(t)) => t,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        };
    }
    match node.get_mut(last) {
        Some(Value::Table(_)) => Err(Error::Config(format!("`{key}` is a section, not a value"))),
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(Error::Config(format!("unknown config key `{key}`"))),
    }
}
