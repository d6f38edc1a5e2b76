//! Per-frame driving-scene difficulty: contextual features plus fused mAP
//! for every availability subset, either loaded from a trace CSV or drawn
//! from a latent-complexity generator.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub features: Vec<f64>,
    pub map_full: f64,
    /// Local-subset key (e.g. `radar_lidar`) → mAP when only that subset fuses.
    pub map_partial: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub frames: Vec<FrameRecord>,
    pub k: usize,
    /// Column order of the partial-fusion scores.
    pub partial_keys: Vec<String>,
    pub metadata: Vec<String>,
}

/// Score the frame ends up with: full fusion when nothing was offloaded or
/// every offloaded output arrived, otherwise the local subset's score.
pub fn realized_map(
    params: &SystemParams,
    frame: &FrameRecord,
    action: Action,
    all_arrived: bool,
) -> Result<f64> {
    if action.is_local() || all_arrived {
        return Ok(frame.map_full);
    }
    let key = params.subset_key(action);
    frame
        .map_partial
        .get(&key)
        .copied()
        .ok_or_else(|| Error::InvalidAction {
            action: action.to_string(),
            reason: format!("frame has no partial score for subset `{key}`"),
        })
}

impl ScenarioTrace {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::domain("scenario trace is empty"));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.features.len() != self.k {
                return Err(Error::domain(format!(
                    "frame {t} has {} features, expected {}",
                    f.features.len(),
                    self.k
                )));
            }
            if f.map_partial.len() != self.partial_keys.len()
                || !self
                    .partial_keys
                    .iter()
                    .all(|k| f.map_partial.contains_key(k))
            {
                return Err(Error::domain(format!(
                    "frame {t} has a different partial key set"
                )));
            }
            let scores = std::iter::once(f.map_full).chain(f.map_partial.values().copied());
            for s in scores {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::domain(format!(
                        "frame {t} has mAP {s} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean_map_full(&self) -> f64 {
        self.frames.iter().map(|f| f.map_full).sum::<f64>() / self.len() as f64
    }

    /// Threshold below which (strictly) a fraction `p` of the frames' full
    /// scores fall.
    pub fn map_threshold_at(&self, p: f64) -> f64 {
        let mut scores: Vec<f64> = self.frames.iter().map(|f| f.map_full).collect();
        scores.sort_by(f64::total_cmp);
        let idx =
            ((p.clamp(0.0, 1.0) * scores.len() as f64).round() as usize).min(scores.len() - 1);
        scores[idx]
    }

    pub fn column_names(&self) -> Vec<String> {
        (0..self.k)
            .map(|j| format!("f{j}"))
            .chain(std::iter::once("map_full".to_string()))
            .chain(self.partial_keys.iter().map(|k| format!("map_{k}")))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        for m in &self.metadata {
            writeln!(out, "# {m}")?;
        }
        out.flush()?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.column_names())?;
        for f in &self.frames {
            let row = f
                .features
                .iter()
                .copied()
                .chain(std::iter::once(f.map_full))
                .chain(self.partial_keys.iter().map(|k| f.map_partial[k]))
                .map(|v| v.to_string());
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Loads a trace CSV whose partial columns must be exactly
/// `map_<key>` for each of `expected_partial`.
pub fn load_trace(path: &Path, expected_partial: &[String]) -> Result<ScenarioTrace> {
    let text = fs::read_to_string(path)?;
    parse_trace(&text, path, expected_partial)
}

fn parse_trace(text: &str, path: &Path, expected_partial: &[String]) -> Result<ScenarioTrace> {
    let schema = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let metadata: Vec<String> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .collect();

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let k = header.iter().take_while(|h| h.starts_with('f')).count();
    let expected: Vec<String> = (0..k)
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("map_full".to_string()))
        .chain(expected_partial.iter().map(|key| format!("map_{key}")))
        .collect();
    if k == 0 || header != expected {
        let shown = if k == 0 {
            let mut cols = vec!["f0..f{k-1}".to_string(), "map_full".to_string()];
            cols.extend(expected_partial.iter().map(|key| format!("map_{key}")));
            cols
        } else {
            expected
        };
        return Err(schema(format!(
            "expected columns [{}], found [{}]",
            shown.join(","),
            header.join(",")
        )));
    }

    let mut frames = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row_err = |message: String| Error::Trace {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != header.len() {
            return Err(row_err(format!(
                "expected {} columns, found {}",
                header.len(),
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in header.iter().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| row_err(format!("column {col}: not a number `{field}`")))?;
            if !v.is_finite() {
                return Err(row_err(format!("column {col}: non-finite value")));
            }
            if col.starts_with("map_") && !(0.0..=1.0).contains(&v) {
                return Err(row_err(format!("column {col}: mAP {v} outside [0, 1]")));
            }
            values.push(v);
        }
        let map_partial = expected_partial
            .iter()
            .zip(&values[k + 1..])
            .map(|(key, &v)| (key.clone(), v))
            .collect();
        frames.push(FrameRecord {
            features: values[..k].to_vec(),
            map_full: values[k],
            map_partial,
        });
    }
    if frames.is_empty() {
        return Err(schema("trace has no frames".into()));
    }
    let trace = ScenarioTrace {
        frames,
        k,
        partial_keys: expected_partial.to_vec(),
        metadata,
    };
    trace.validate()?;
    Ok(trace)
}

/// Latent-complexity scene generator.
///
/// Complexity `z ∈ [0, 1]` follows `z' = α·z + (1−α)·μ + ε` (clipped); full
/// fusion scores `base − span·z` plus noise, and each partial subset loses
/// `missing·(degradation_base + degradation_slope·z)` where `missing` counts
/// the offloaded pipelines. Features are a fixed affine embedding of
/// `2z − 1` plus per-dimension noise; the embedding depends only on
/// `embedding_seed` so traces drawn with different seeds share it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub k: usize,
    pub base: f64,
    pub span: f64,
    pub alpha: f64,
    pub mu: f64,
    pub z_noise: f64,
    pub map_noise: f64,
    pub feature_noise: f64,
    pub degradation_base: f64,
    pub degradation_slope: f64,
    pub embedding_seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            k: 16,
            base: 0.85,
            span: 0.5,
            alpha: 0.95,
            mu: 0.4,
            z_noise: 0.06,
            map_noise: 0.02,
            feature_noise: 0.25,
            degradation_base: 0.015,
            degradation_slope: 0.05,
            embedding_seed: 7,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::domain(format!(
                "alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.span > 0.0) {
            return Err(Error::domain(format!(
                "span must be positive, got {}",
                self.span
            )));
        }
        if self.k == 0 {
            return Err(Error::domain("feature dimension k must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mu) || !(0.0..=1.0).contains(&self.base) {
            return Err(Error::domain("mu and base must lie in [0, 1]"));
        }
        for (name, v) in [
            ("z_noise", self.z_noise),
            ("map_noise", self.map_noise),
            ("feature_noise", self.feature_noise),
            ("degradation_base", self.degradation_base),
            ("degradation_slope", self.degradation_slope),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn embedding(&self) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.embedding_seed);
        (0..self.k)
            .map(|_| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (
                    sign * rng.random_range(0.5..1.5),
                    rng.random_range(-0.2..0.2),
                )
            })
            .collect()
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("noise levels are validated non-negative")
}

pub fn generate_synthetic(
    gen: &GeneratorParams,
    params: &SystemParams,
    n_frames: usize,
    seed: u64,
) -> Result<ScenarioTrace> {
    gen.validate()?;
    if n_frames == 0 {
        return Err(Error::domain("n_frames must be at least 1"));
    }
    let embedding = gen.embedding();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step_noise = normal(gen.z_noise);
    let stationary = normal(gen.z_noise / (1.0 - gen.alpha * gen.alpha).sqrt());
    let map_noise = normal(gen.map_noise);
    let feature_noise = normal(gen.feature_noise);

    let subsets: Vec<(String, f64)> = params
        .action_set
        .iter()
        .filter(|a| !a.is_local())
        .map(|&a| (params.subset_key(a), f64::from(a.offloaded())))
        .collect();

    let mut z = (gen.mu + stationary.sample(&mut rng)).clamp(0.0, 1.0);
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        if t > 0 {
            z = (gen.alpha * z + (1.0 - gen.alpha) * gen.mu + step_noise.sample(&mut rng))
                .clamp(0.0, 1.0);
        }
        let map_full = (gen.base - gen.span * z + map_noise.sample(&mut rng)).clamp(0.0, 1.0);
        let loss_per_pipeline = gen.degradation_base + gen.degradation_slope * z;
        let map_partial = subsets
            .iter()
            .map(|(key, missing)| {
                (
                    key.clone(),
                    (map_full - missing * loss_per_pipeline).max(0.0),
                )
            })
            .collect();
        let centered = 2.0 * z - 1.0;
        let features = embedding
            .iter()
            .map(|(gain, offset)| gain * centered + offset + feature_noise.sample(&mut rng))
            .collect();
        frames.push(FrameRecord {
            features,
            map_full,
            map_partial,
        });
    }

    Ok(ScenarioTrace {
        frames,
        k: gen.k,
        partial_keys: subsets.into_iter().map(|(k, _)| k).collect(),
        metadata: vec![
            "synthetic scenario trace".to_string(),
            format!("seed={seed} n_frames={n_frames}"),
            format!(
                "k={} base={} span={} alpha={} mu={} z_noise={} map_noise={} feature_noise={} \
                 degradation_base={} degradation_slope={} embedding_seed={}",
                gen.k,
                gen.base,
                gen.span,
                gen.alpha,
                gen.mu,
                gen.z_noise,
                gen.map_noise,
                gen.feature_noise,
                gen.degradation_base,
                gen.degradation_slope,
                gen.embedding_seed
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys() -> Vec<String> {
        SystemParams::default().partial_keys()
    }

    #[test]
    fn degenerate_generator_is_constant() {
        let gen = GeneratorParams {
            alpha: 0.0,
            mu: 0.0,
            z_noise: 0.0,
            map_noise: 0.0,
            feature_noise: 0.0,
            ..GeneratorParams::default()
        };
        let trace = generate_synthetic(&gen, &SystemParams::default(), 50, 1).unwrap();
        assert!(trace.frames.iter().all(|f| f.map_full == gen.base));
        assert!(trace
            .frames
            .windows(2)
            .all(|w| w[0].features == w[1].features));
    }

    #[test]
    fn generator_rejects_bad_params() {
        let p = SystemParams::default();
        for gen in [
            GeneratorParams {
                alpha: 1.0,
                ..Default::default()
            },
            GeneratorParams {
                alpha: -0.1,
                ..Default::default()
            },
            GeneratorParams {
                span: 0.0,
                ..Default::default()
            },
        ] {
            assert!(generate_synthetic(&gen, &p, 10, 0).is_err());
        }
        assert!(generate_synthetic(&GeneratorParams::default(), &p, 0, 0).is_err());
    }

    #[test]
    fn realized_map_cases() {
        let p = SystemParams::default();
        let trace = generate_synthetic(&GeneratorParams::default(), &p, 5, 2).unwrap();
        let f = &trace.frames[0];
        assert_eq!(
            realized_map(&p, f, Action::LOCAL, false).unwrap(),
            f.map_full
        );
        assert_eq!(
            realized_map(&p, f, Action::offload(3), true).unwrap(),
            f.map_full
        );
        assert_eq!(
            realized_map(&p, f, Action::offload(3), false).unwrap(),
            f.map_partial["radar"]
        );
        assert_eq!(
            realized_map(&p, f, Action::offload(2), false).unwrap(),
            f.map_partial["radar_lidar"]
        );
        assert!(realized_map(&p, f, Action::offload(1), false).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = SystemParams::default();
        let trace = generate_synthetic(&GeneratorParams::default(), &p, 3, 4).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("f15,map_full,map_radar_lidar,map_radar"));
        let back = parse_trace(&text, Path::new("x.csv"), &keys()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back, trace);
    }

    #[test]
    fn range_error_names_the_row() {
        let text = "f0,f1,map_full,map_radar_lidar,map_radar\n\
                    0.1,0.2,0.7,0.6,0.5\n\
                    0.1,0.2,1.3,0.6,0.5\n";
        let err = parse_trace(text, Path::new("bad.csv"), &keys()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.csv:3"), "{msg}");
        assert!(msg.contains("map_full"), "{msg}");
    }

    #[test]
    fn missing_column_lists_expected_schema() {
        let text = "f0,f1,map_full,map_radar_lidar\n0.1,0.2,0.7,0.6\n";
        let err = parse_trace(text, Path::new("s.csv"), &keys()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("map_radar"), "{msg}");
        assert!(
            msg.contains("expected columns [f0,f1,map_full,map_radar_lidar,map_radar]"),
            "{msg}"
        );
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = "f0,map_full,map_radar_lidar,map_radar\n0.1,0.7,0.6\n";
        assert!(parse_trace(text, Path::new("r.csv"), &keys()).is_err());
    }

    #[test]
    fn comments_and_metadata() {
        let text = "# source: unit\nf0,map_full,map_radar_lidar,map_radar\n# mid comment\n0.1,0.7,0.6,0.5\n";
        let t = parse_trace(text, Path::new("c.csv"), &keys()).unwrap();
        assert_eq!(t.metadata, vec!["source: unit"]);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn threshold_quantile() {
        let p = SystemParams::default();
        let trace = generate_synthetic(&GeneratorParams::default(), &p, 1000, 8).unwrap();
        let th = trace.map_threshold_at(0.7);
        let below = trace.frames.iter().filter(|f| f.map_full < th).count();
        assert!((690..=710).contains(&below), "{below}");
    }
}
