//! Policy evaluation (action frequencies, AMAP, risky/robust split, energy)
//! and deterministic cost-model sweeps, with their CSV schemas.

use std::io::Write;
use std::thread;

use crate::action::Action;
use crate::cost::{action_costs, energy_local};
use crate::env::{Env, EnvOptions, LinkSource, RewardParams, StepResult};
use crate::error::Result;
use crate::params::SystemParams;
use crate::policies::{Observation, Policy};
use crate::scenario::ScenarioTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionStats {
    pub action: Action,
    pub count: usize,
    pub freq_pct: f64,
    /// Mean full-fusion score (%) of the frames mapped to this action.
    pub amap_pct: Option<f64>,
    /// Mean score (%) those frames actually ended up with.
    pub realized_amap_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub policy: String,
    /// Server load of a sampled link; `None` for fixed links.
    pub rho: Option<f64>,
    pub map_th: f64,
    pub n_steps: usize,
    pub actions: Vec<ActionStats>,
    pub n_offload: usize,
    /// Share of offloading decisions taken on frames under the threshold.
    pub risky_pct: f64,
    pub robust_pct: f64,
    pub total_energy_j: f64,
    /// Energy the same replays would have used fully local.
    pub local_energy_j: f64,
    pub energy_reduction_pct: f64,
    pub deadline_miss_pct: f64,
    pub mean_reward: f64,
}

impl EvalReport {
    pub fn stats(&self, action: Action) -> Option<&ActionStats> {
        self.actions.iter().find(|s| s.action == action)
    }

    pub fn freq(&self, action: Action) -> f64 {
        self.stats(action).map_or(0.0, |s| s.freq_pct)
    }

    pub fn amap(&self, action: Action) -> Option<f64> {
        self.stats(action).and_then(|s| s.amap_pct)
    }
}

/// Runs one episode of `policy` and returns every step.
pub fn replay(policy: &dyn Policy, env: &mut Env<'_>, seed: u64) -> Result<Vec<StepResult>> {
    let mut state = env.reset(seed);
    let mut out = Vec::with_capacity(env.trace().len());
    while let Some(frame) = env.current_frame() {
        let decision = policy.decide(Observation {
            state: &state,
            map_full: frame.map_full,
        })?;
        let step = env.step(decision.action)?;
        state = step.next_state.clone();
        out.push(step);
    }
    Ok(out)
}

/// Replays the trace once per seed (seeds run on separate threads) and
/// aggregates in seed order.
pub fn evaluate(
    policy: &dyn Policy,
    trace: &ScenarioTrace,
    link: LinkSource,
    params: &SystemParams,
    reward: RewardParams,
    options: EnvOptions,
    seeds: &[u64],
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(crate::error::Error::domain(
            "evaluation needs at least one seed",
        ));
    }
    let runs: Vec<Result<Vec<StepResult>>> = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let mut env = Env::new(trace, params, link, reward, options)?;
                    replay(policy, &mut env, seed)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    });
    let mut steps = Vec::with_capacity(trace.len() * seeds.len());
    for run in runs {
        steps.extend(run?);
    }
    let mut report = aggregate(policy.name(), params, &steps)?;
    if let LinkSource::Sampled { queue, .. } = link {
        report.rho = Some(queue.rho);
    }
    Ok(report)
}

pub fn aggregate(policy: &str, params: &SystemParams, steps: &[StepResult]) -> Result<EvalReport> {
    let n = steps.len();
    let pct = |num: f64, den: usize| {
        if den == 0 {
            0.0
        } else {
            100.0 * num / den as f64
        }
    };

    let actions = params
        .action_set
        .iter()
        .map(|&action| {
            let mine: Vec<&StepResult> = steps.iter().filter(|s| s.action == action).collect();
            let count = mine.len();
            let mean = |f: fn(&StepResult) -> f64| {
                (count > 0).then(|| 100.0 * mine.iter().map(|s| f(s)).sum::<f64>() / count as f64)
            };
            ActionStats {
                action,
                count,
                freq_pct: pct(count as f64, n),
                amap_pct: mean(|s| s.map_full),
                realized_amap_pct: mean(|s| s.realized_map),
            }
        })
        .collect();

    let offloads: Vec<&StepResult> = steps.iter().filter(|s| !s.action.is_local()).collect();
    let risky = offloads
        .iter()
        .filter(|s| s.map_full < params.map_th)
        .count();
    let (risky_pct, robust_pct) = if offloads.is_empty() {
        (0.0, 100.0)
    } else {
        let r = pct(risky as f64, offloads.len());
        (r, 100.0 - r)
    };

    let total_energy_j: f64 = steps.iter().map(|s| s.cost.e_total_j).sum();
    let local_energy_j = energy_local(params, Action::LOCAL)? * n as f64;
    let energy_reduction_pct = if local_energy_j > 0.0 {
        100.0 * (1.0 - total_energy_j / local_energy_j)
    } else {
        0.0
    };
    let misses = steps.iter().filter(|s| !s.deadline_met).count();

    Ok(EvalReport {
        policy: policy.to_string(),
        rho: None,
        map_th: params.map_th,
        n_steps: n,
        actions,
        n_offload: offloads.len(),
        risky_pct,
        robust_pct,
        total_energy_j,
        local_energy_j,
        energy_reduction_pct,
        deadline_miss_pct: pct(misses as f64, n),
        mean_reward: if n == 0 {
            0.0
        } else {
            steps.iter().map(|s| s.reward).sum::<f64>() / n as f64
        },
    })
}

pub fn eval_header(params: &SystemParams) -> Vec<String> {
    let mut cols = vec![
        "policy".to_string(),
        "rho".into(),
        "map_th".into(),
        "n_steps".into(),
    ];
    for a in &params.action_set {
        cols.push(format!("freq_{a}"));
        cols.push(format!("amap_{a}"));
        cols.push(format!("realized_amap_{a}"));
    }
    cols.extend(
        [
            "risky_pct",
            "robust_pct",
            "total_energy_j",
            "energy_reduction_pct",
            "deadline_miss_pct",
            "mean_reward",
        ]
        .map(String::from),
    );
    cols
}

/// `eval_report.csv`: one row per report, percentages with 2 decimals,
/// empty AMAP cells for actions never chosen.
pub fn write_eval_csv<W: Write>(
    reports: &[EvalReport],
    params: &SystemParams,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(eval_header(params))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
    for r in reports {
        let mut row = vec![
            r.policy.clone(),
            r.rho.map(|x| format!("{x}")).unwrap_or_default(),
            format!("{:.4}", r.map_th),
            r.n_steps.to_string(),
        ];
        for &a in &params.action_set {
            let s = r.stats(a);
            row.push(format!("{:.2}", s.map_or(0.0, |s| s.freq_pct)));
            row.push(opt(s.and_then(|s| s.amap_pct)));
            row.push(opt(s.and_then(|s| s.realized_amap_pct)));
        }
        row.push(format!("{:.2}", r.risky_pct));
        row.push(format!("{:.2}", r.robust_pct));
        row.push(format!("{:.6}", r.total_energy_j));
        row.push(format!("{:.2}", r.energy_reduction_pct));
        row.push(format!("{:.2}", r.deadline_miss_pct));
        row.push(format!("{:.6}", r.mean_reward));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    pub action: Action,
    pub l_total_ms: f64,
    pub e_total_j: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub phi_mbps: f64,
    pub q_ms: f64,
    pub entries: Vec<SweepEntry>,
}

impl SweepRow {
    pub fn entry(&self, action: Action) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.action == action)
    }
}

fn sweep_point(params: &SystemParams, phi: f64, q: f64) -> Result<SweepRow> {
    let entries = action_costs(params, phi, params.phi_down(phi), q)?
        .into_iter()
        .map(|(action, c)| SweepEntry {
            action,
            l_total_ms: c.l_total_ms,
            e_total_j: c.e_total_j,
            feasible: c.meets(params.l_th_ms),
        })
        .collect();
    Ok(SweepRow {
        phi_mbps: phi,
        q_ms: q,
        entries,
    })
}

pub fn sweep_channel(
    params: &SystemParams,
    phi_grid: &[f64],
    fixed_q_ms: f64,
) -> Result<Vec<SweepRow>> {
    phi_grid
        .iter()
        .map(|&phi| sweep_point(params, phi, fixed_q_ms))
        .collect()
}

pub fn sweep_queue(
    params: &SystemParams,
    q_grid: &[f64],
    fixed_phi_mbps: f64,
) -> Result<Vec<SweepRow>> {
    q_grid
        .iter()
        .map(|&q| sweep_point(params, fixed_phi_mbps, q))
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], params: &SystemParams, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["phi_mbps".to_string(), "q_ms".to_string()];
    for a in &params.action_set {
        header.push(format!("l_total_ms_{a}"));
        header.push(format!("e_total_j_{a}"));
        header.push(format!("feasible_{a}"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![format!("{:.4}", r.phi_mbps), format!("{:.4}", r.q_ms)];
        for e in &r.entries {
            row.push(format!("{:.4}", e.l_total_ms));
            row.push(format!("{:.6}", e.e_total_j));
            row.push(u8::from(e.feasible).to_string());
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Smallest capacity in `[lo, hi]` at which `action` meets the deadline
/// with server delay `q_ms`, by bisection (feasibility is monotone in φ).
pub fn crossover_phi(
    params: &SystemParams,
    action: Action,
    q_ms: f64,
    lo: f64,
    hi: f64,
) -> Result<Option<f64>> {
    let feasible = |phi: f64| -> Result<bool> {
        let c = crate::cost::total_cost(params, action, phi, params.phi_down(phi), q_ms)?;
        Ok(c.meets(params.l_th_ms))
    };
    if !feasible(hi)? {
        return Ok(None);
    }
    if feasible(lo)? {
        return Ok(Some(lo));
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(Some(hi))
}

/// `start, start+step, …` up to and including `stop` (within half a step).
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return vec![start];
    }
    let n = ((stop - start) / step + 0.5).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}
