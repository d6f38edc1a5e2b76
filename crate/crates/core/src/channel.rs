//! i.i.d. Rayleigh channel-capacity model: maximum-likelihood fit to a
//! throughput trace and inverse-CDF sampling.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FLOOR_MBPS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Rayleigh scale, Mbit/s.
    pub sigma: f64,
    /// Smallest capacity ever emitted, Mbit/s.
    pub floor_mbps: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            floor_mbps: DEFAULT_FLOOR_MBPS,
        }
    }
}

impl ChannelModel {
    pub fn new(sigma: f64, floor_mbps: f64) -> Result<Self> {
        let model = Self { sigma, floor_mbps };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.floor_mbps >= 0.0 && self.floor_mbps.is_finite()) {
            return Err(Error::domain(format!(
                "floor_mbps must be non-negative, got {}",
                self.floor_mbps
            )));
        }
        Ok(())
    }

    /// Capacity at upper-tail probability `u ∈ (0, 1]`: `σ·sqrt(−2 ln u)`,
    /// clamped to the floor.
    pub fn quantile_upper(&self, u: f64) -> f64 {
        (self.sigma * (-2.0 * u.ln()).sqrt()).max(self.floor_mbps)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // random() is in [0, 1); flip it so ln never sees 0.
        let u = 1.0 - rng.random::<f64>();
        self.quantile_upper(u)
    }

    pub fn mean(&self) -> f64 {
        self.sigma * (std::f64::consts::PI / 2.0).sqrt()
    }
}

/// Maximum-likelihood Rayleigh scale: `sqrt(Σx² / 2n)`.
pub fn fit_rayleigh(samples: &[f64]) -> Result<ChannelModel> {
    if samples.len() < 2 {
        return Err(Error::domain(format!(
            "need at least 2 throughput samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::domain(format!(
            "throughput samples must be positive, found {bad}"
        )));
    }
    let sum_sq: f64 = samples.iter().map(|x| x * x).sum();
    let sigma = (sum_sq / (2.0 * samples.len() as f64)).sqrt();
    ChannelModel::new(sigma, DEFAULT_FLOOR_MBPS)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(samples: &[f64]) -> TraceSummary {
    let count = samples.len();
    let mean = samples.iter().sum::<f64>() / count.max(1) as f64;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    TraceSummary {
        count,
        mean,
        min,
        max,
    }
}

/// Reads a throughput trace: one decimal Mbit/s value per line, `#`
/// comments and blank lines ignored.
pub fn read_throughput_trace(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    parse_throughput_trace(&text, path)
}

pub(crate) fn parse_throughput_trace(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Trace {
            path: path.to_path_buf(),
            line: k + 1,
            message: format!("not a number: `{line}`"),
        })?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Trace {
                path: path.to_path_buf(),
                line: k + 1,
                message: format!("throughput must be positive, got {value}"),
            });
        }
        out.push(value);
    }
    Ok(out)
}
