//! Plain-text network checkpoint.
//!
//! ```text
//! offsim-qnet 1
//! scales <phi_scale> <q_scale>
//! context <n_layers>
//! layer <inputs> <outputs> <relu|linear>
//! <outputs·inputs weights, row-major>
//! <outputs biases>
//! ...
//! state <n_layers>
//! ...
//! ```
//! Floats use Rust's shortest round-trip formatting, so save/load is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::network::{Dense, QNetwork};
use crate::error::{Error, Result};

const MAGIC: &str = "offsim-qnet";
const VERSION: u32 = 1;

pub fn to_string(net: &QNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "scales {} {}", net.phi_scale, net.q_scale);
    for (name, layers) in [("context", &net.context), ("state", &net.state)] {
        let _ = writeln!(out, "{name} {}", layers.len());
        for l in layers.iter() {
            let act = if l.relu { "relu" } else { "linear" };
            let _ = writeln!(out, "layer {} {} {act}", l.inputs, l.outputs);
            let _ = writeln!(out, "{}", join(&l.weights));
            let _ = writeln!(out, "{}", join(&l.bias));
        }
    }
    out
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn save(net: &QNetwork, path: &Path) -> Result<()> {
    fs::write(path, to_string(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<QNetwork> {
    parse(&fs::read_to_string(path)?)
}

pub fn parse(text: &str) -> Result<QNetwork> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| bad(format!("unexpected end of file, expected {what}")))
    };

    let (n, header) = next("header")?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| bad(format!("line {n}: not a {MAGIC} checkpoint")))?;
    if version != VERSION.to_string() {
        return Err(bad(format!("line {n}: unsupported version `{version}`")));
    }

    let (n, scales) = next("scales")?;
    let scales = fields(scales, "scales", n)?;
    let [phi_scale, q_scale] = floats(&scales, n)?[..] else {
        return Err(bad(format!("line {n}: scales needs two values")));
    };

    let mut stages = Vec::new();
    for name in ["context", "state"] {
        let (n, line) = next(name)?;
        let count: usize = fields(line, name, n)?
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("line {n}: expected `{name} <n_layers>`")))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, spec) = next("layer")?;
            let spec = fields(spec, "layer", n)?;
            let (inputs, outputs, relu) = match spec.as_slice() {
                [i, o, act] => (
                    i.parse::<usize>()
                        .map_err(|_| bad(format!("line {n}: bad input width")))?,
                    o.parse::<usize>()
                        .map_err(|_| bad(format!("line {n}: bad output width")))?,
                    match *act {
                        "relu" => true,
                        "linear" => false,
                        other => {
                            return Err(bad(format!("line {n}: unknown activation `{other}`")))
                        }
                    },
                ),
                _ => return Err(bad(format!("line {n}: expected `layer <in> <out> <act>`"))),
            };
            let (n, w) = next("weights")?;
            let weights = floats(&w.split_whitespace().collect::<Vec<_>>(), n)?;
            if weights.len() != inputs * outputs {
                return Err(bad(format!(
                    "line {n}: expected {} weights, found {}",
                    inputs * outputs,
                    weights.len()
                )));
            }
            let (n, b) = next("biases")?;
            let bias = floats(&b.split_whitespace().collect::<Vec<_>>(), n)?;
            if bias.len() != outputs {
                return Err(bad(format!(
                    "line {n}: expected {outputs} biases, found {}",
                    bias.len()
                )));
            }
            layers.push(Dense {
                inputs,
                outputs,
                weights,
                bias,
                relu,
            });
        }
        stages.push(layers);
    }
    let state = stages.pop().unwrap_or_default();
    let context = stages.pop().unwrap_or_default();
    QNetwork::from_layers(context, state, phi_scale, q_scale)
}

fn fields<'a>(line: &'a str, keyword: &str, n: usize) -> Result<Vec<&'a str>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(Error::Checkpoint(format!("line {n}: expected `{keyword}`")));
    }
    Ok(parts.collect())
}

fn floats(parts: &[&str], n: usize) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Checkpoint(format!("line {n}: bad number `{p}`")))
        })
        .collect()
}
