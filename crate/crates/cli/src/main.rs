mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use offsim::agent::{checkpoint, train, QNetwork};
use offsim::channel::{fit_rayleigh, read_throughput_trace, summarize};
use offsim::env::LinkSource;
use offsim::metrics::{crossover_phi, grid, write_eval_csv, write_sweep_csv};
use offsim::policies::{DrlPolicy, LocalPolicy, OraclePolicy, Policy, RAgnosticPolicy};
use offsim::{
    evaluate, generate_synthetic, load_trace, sweep_channel, sweep_queue, Config, Env, PolicyKind,
    QueueModel, ScenarioTrace,
};

use manifest::Run;

/// Energy/robustness-aware offloading simulator.
#[derive(Debug, Parser)]
#[command(name = "offsim", version)]
struct Cli {
    /// TOML config file layered over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set rho=0.97` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Directory for outputs and the run manifest.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,

    /// Print the resolved config and exit without running.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the Rayleigh scale to a throughput trace (one Mbit/s value per line).
    FitChannel {
        /// Throughput samples, one Mbit/s value per line.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Write a synthetic scenario trace.
    Generate {
        #[arg(long, value_enum, default_value_t = Split::Eval)]
        split: Split,
        /// Overrides the split's frame count.
        #[arg(long)]
        frames: Option<usize>,
        /// Overrides the split's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file, relative to `--out`.
        #[arg(long, default_value = "trace.csv")]
        output: PathBuf,
    },
    /// Train the DDQN agent; writes `checkpoint.txt` and `training_log.csv`.
    Train {
        /// Training trace; generated from `scenario.train_*` when absent.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        threshold: Threshold,
        /// Trace the `--map-th-percentile` quantile is taken from; the
        /// generated evaluation trace when absent.
        #[arg(long)]
        eval_trace: Option<PathBuf>,
    },
    /// Evaluate policies; writes `eval_report.csv`.
    Eval {
        /// Policies to run (repeatable or comma-separated). Defaults to
        /// local, ragnostic and oracle, plus drl when a checkpoint is given.
        #[arg(long, value_delimiter = ',')]
        policy: Vec<PolicyArg>,
        /// DDQN checkpoint written by `train`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluation trace; generated from `scenario.frames`/`scenario.seed` when absent.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        threshold: Threshold,
        /// Server loads to evaluate; defaults to the configured `rho`.
        #[arg(long, value_delimiter = ',')]
        rho: Vec<f64>,
    },
    /// Cost-model sweeps; writes `sweep_channel.csv` and/or `sweep_queue.csv`.
    Sweep {
        #[arg(long, value_enum, default_value_t = Axis::Both)]
        axis: Axis,
        #[arg(long, default_value_t = 2.0)]
        phi_min: f64,
        #[arg(long, default_value_t = 12.0)]
        phi_max: f64,
        #[arg(long, default_value_t = 0.1)]
        phi_step: f64,
        /// Fixed queuing delays (ms) for the channel sweep.
        #[arg(long, value_delimiter = ',', default_value = "15")]
        q_list: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        q_min: f64,
        #[arg(long, default_value_t = 60.0)]
        q_max: f64,
        #[arg(long, default_value_t = 0.5)]
        q_step: f64,
        /// Fixed channel capacity (Mbit/s) for the queue sweep.
        #[arg(long, default_value_t = 8.0)]
        phi: f64,
    },
    /// Print the resolved config as TOML.
    DumpConfig,
}

#[derive(Debug, Clone, Args)]
struct Threshold {
    /// Set `map_th` to this quantile of the evaluation trace's full-fusion scores.
    #[arg(long, value_name = "P")]
    map_th_percentile: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Eval,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    Channel,
    Queue,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Local,
    Ragnostic,
    Oracle,
    Drl,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Local => PolicyKind::Local,
            PolicyArg::Ragnostic => PolicyKind::RAgnostic,
            PolicyArg::Oracle => PolicyKind::Oracle,
            PolicyArg::Drl => PolicyKind::Drl,
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli, argv.into_iter().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", kind(&e), one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<offsim::Error>().map(offsim::Error::kind))
        .or_else(|| {
            e.chain()
                .find_map(|c| c.downcast_ref::<std::io::Error>().map(|_| "io"))
        })
        .unwrap_or("runtime")
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let mut config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::DumpConfig => {
            print!("{}", config.to_toml()?);
            Ok(())
        }
        Command::FitChannel { trace } => {
            if dump(cli.dump_config, &config)? {
                return Ok(());
            }
            fit_channel_cmd(&config, &trace, &cli.out, args)
        }
        Command::Generate {
            split,
            frames,
            seed,
            output,
        } => {
            if dump(cli.dump_config, &config)? {
                return Ok(());
            }
            let (n, s) = match split {
                Split::Eval => (config.scenario.frames, config.scenario.seed),
                Split::Train => (config.scenario.train_frames, config.scenario.train_seed),
            };
            let (n, s) = (frames.unwrap_or(n), seed.unwrap_or(s));
            let trace = generate_synthetic(&config.scenario.generator, &config.system, n, s)?;
            let mut run = Run::new("generate", args, &config, &cli.out)?;
            let path = run.path(&output.to_string_lossy());
            let mut bytes = Vec::new();
            trace.write_csv(&mut bytes)?;
            run.write(&path, &bytes)?;
            run.finish()?;
            println!("wrote {} frames to {}", trace.len(), path.display());
            Ok(())
        }
        Command::Train {
            trace,
            threshold,
            eval_trace: eval_trace_path,
        } => {
            let eval_trace = match &eval_trace_path {
                Some(p) => Some(read_trace(p, &config)?),
                None => None,
            };
            resolve_threshold(&mut config, &threshold, eval_trace.as_ref())?;
            if dump(cli.dump_config, &config)? {
                return Ok(());
            }
            train_cmd(
                &config,
                trace.as_deref(),
                eval_trace_path.as_deref(),
                &cli.out,
                args,
            )
        }
        Command::Eval {
            policy,
            checkpoint,
            trace,
            threshold,
            rho,
        } => {
            let eval_trace = match &trace {
                Some(p) => read_trace(p, &config)?,
                None => scenario_trace(&config, Split::Eval)?,
            };
            resolve_threshold(&mut config, &threshold, Some(&eval_trace))?;
            if dump(cli.dump_config, &config)? {
                return Ok(());
            }
            let req = EvalRequest {
                policies: policy,
                checkpoint: checkpoint.as_deref(),
                trace_path: trace.as_deref(),
                rhos: rho,
            };
            eval_cmd(&config, &eval_trace, req, &cli.out, args)
        }
        Command::Sweep {
            axis,
            phi_min,
            phi_max,
            phi_step,
            q_list,
            q_min,
            q_max,
            q_step,
            phi,
        } => {
            if dump(cli.dump_config, &config)? {
                return Ok(());
            }
            let params = &config.system;
            let mut run = Run::new("sweep", args, &config, &cli.out)?;
            if matches!(axis, Axis::Channel | Axis::Both) {
                if q_list.is_empty() {
                    bail!("--q-list needs at least one delay");
                }
                let phis = grid(phi_min, phi_max, phi_step);
                let mut rows = Vec::new();
                for &q in &q_list {
                    rows.extend(sweep_channel(params, &phis, q)?);
                    let cross: Vec<String> = params
                        .action_set
                        .iter()
                        .filter(|a| !a.is_local())
                        .map(|&a| {
                            let v = crossover_phi(params, a, q, 1e-3, 1e4)?;
                            Ok(format!(
                                "{a}={}",
                                v.map_or("none".into(), |x| format!("{x:.4}"))
                            ))
                        })
                        .collect::<Result<_>>()?;
                    println!("min_feasible_phi q_ms={q} {}", cross.join(" "));
                }
                let mut bytes = Vec::new();
                write_sweep_csv(&rows, params, &mut bytes)?;
                run.write(&run.path("sweep_channel.csv"), &bytes)?;
            }
            if matches!(axis, Axis::Queue | Axis::Both) {
                let rows = sweep_queue(params, &grid(q_min, q_max, q_step), phi)?;
                let mut bytes = Vec::new();
                write_sweep_csv(&rows, params, &mut bytes)?;
                run.write(&run.path("sweep_queue.csv"), &bytes)?;
            }
            run.finish()?;
            Ok(())
        }
    }
}

fn dump(flag: bool, config: &Config) -> Result<bool> {
    if flag {
        print!("{}", config.to_toml()?);
    }
    Ok(flag)
}

fn read_trace(path: &Path, config: &Config) -> Result<ScenarioTrace> {
    load_trace(path, &config.system.partial_keys())
        .with_context(|| format!("reading {}", path.display()))
}

fn scenario_trace(config: &Config, split: Split) -> Result<ScenarioTrace> {
    let (n, seed) = match split {
        Split::Eval => (config.scenario.frames, config.scenario.seed),
        Split::Train => (config.scenario.train_frames, config.scenario.train_seed),
    };
    Ok(generate_synthetic(
        &config.scenario.generator,
        &config.system,
        n,
        seed,
    )?)
}

/// Replaces `map_th` by the requested quantile of `eval_trace` (or the
/// configured evaluation trace when none is given).
fn resolve_threshold(
    config: &mut Config,
    t: &Threshold,
    eval_trace: Option<&ScenarioTrace>,
) -> Result<()> {
    let Some(p) = t.map_th_percentile else {
        return Ok(());
    };
    if !(0.0..=1.0).contains(&p) {
        bail!("--map-th-percentile must lie in [0, 1], got {p}");
    }
    let th = match eval_trace {
        Some(trace) => trace.map_threshold_at(p),
        None => scenario_trace(config, Split::Eval)?.map_threshold_at(p),
    };
    config.system.map_th = th;
    config.validate()?;
    Ok(())
}

fn fit_channel_cmd(config: &Config, trace: &Path, out: &Path, args: Vec<String>) -> Result<()> {
    let samples =
        read_throughput_trace(trace).with_context(|| format!("reading {}", trace.display()))?;
    let fit = fit_rayleigh(&samples)?;
    let summary = summarize(&samples);
    let mut run = Run::new("fit-channel", args, config, out)?;
    run.input(trace)?;
    let text = format!(
        "# Rayleigh fit of {} samples (mean {:.4}, min {:.4}, max {:.4} Mbit/s)\nsigma = {}\nfloor_mbps = {}\n",
        summary.count, summary.mean, summary.min, summary.max, fit.sigma, config.channel.floor_mbps
    );
    run.write(&run.path("channel_fit.toml"), text.as_bytes())?;
    run.finish()?;
    println!(
        "sigma={:.6} n={} mean={:.6} min={:.6} max={:.6}",
        fit.sigma, summary.count, summary.mean, summary.min, summary.max
    );
    Ok(())
}

fn train_cmd(
    config: &Config,
    trace_path: Option<&Path>,
    eval_trace_path: Option<&Path>,
    out: &Path,
    args: Vec<String>,
) -> Result<()> {
    let trace = match trace_path {
        Some(p) => read_trace(p, config)?,
        None => scenario_trace(config, Split::Train)?,
    };
    let mut run = Run::new("train", args, config, out)?;
    for p in [trace_path, eval_trace_path].into_iter().flatten() {
        run.input(p)?;
    }
    let mut env = Env::new(
        &trace,
        &config.system,
        config.link(),
        config.reward,
        config.env,
    )?;
    let trained = train(&mut env, &config.train)?;

    run.write(
        &run.path("checkpoint.txt"),
        checkpoint::to_string(&trained.network).as_bytes(),
    )?;
    let mut log = Vec::new();
    trained.log.write_csv(&mut log)?;
    run.write(&run.path("training_log.csv"), &log)?;
    run.finish()?;

    let eps = &trained.log.episodes;
    if let (Some(first), Some(last)) = (eps.first(), eps.last()) {
        println!(
            "trained {} episodes on {} frames; mean reward {:.4} -> {:.4}; map_th={:.4}",
            eps.len(),
            trace.len(),
            first.mean_reward,
            last.mean_reward,
            config.system.map_th
        );
    }
    Ok(())
}

struct EvalRequest<'a> {
    policies: Vec<PolicyArg>,
    checkpoint: Option<&'a Path>,
    trace_path: Option<&'a Path>,
    rhos: Vec<f64>,
}

fn eval_cmd(
    config: &Config,
    trace: &ScenarioTrace,
    req: EvalRequest<'_>,
    out: &Path,
    args: Vec<String>,
) -> Result<()> {
    let params = &config.system;
    let mut kinds: Vec<PolicyKind> = req.policies.iter().map(|&p| p.into()).collect();
    if kinds.is_empty() {
        kinds = vec![PolicyKind::Local, PolicyKind::RAgnostic, PolicyKind::Oracle];
        if req.checkpoint.is_some() {
            kinds.push(PolicyKind::Drl);
        }
    }
    let net: Option<QNetwork> = match req.checkpoint {
        Some(p) => {
            let net = checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            if net.input_dim() != trace.k || net.n_actions() != params.action_set.len() {
                bail!(offsim::Error::Checkpoint(format!(
                    "{} expects {} features and {} actions; trace has {} features and the action set {} actions",
                    p.display(),
                    net.input_dim(),
                    net.n_actions(),
                    trace.k,
                    params.action_set.len()
                )));
            }
            Some(net)
        }
        None => None,
    };
    let mut run = Run::new("eval", args, config, out)?;
    for p in [req.trace_path, req.checkpoint].into_iter().flatten() {
        run.input(p)?;
    }
    let rhos = if req.rhos.is_empty() {
        vec![config.queue.rho]
    } else {
        req.rhos
    };

    let mut reports = Vec::new();
    for &rho in &rhos {
        let queue = QueueModel::new(rho, config.queue.queue_cap, config.queue.t_service_ms)?;
        let link = LinkSource::Sampled {
            channel: config.channel,
            queue,
        };
        for kind in &kinds {
            let policy: Box<dyn Policy + '_> = match kind {
                PolicyKind::Local => Box::new(LocalPolicy),
                PolicyKind::RAgnostic => Box::new(RAgnosticPolicy { params }),
                PolicyKind::Oracle => Box::new(OraclePolicy { params }),
                PolicyKind::Drl => Box::new(DrlPolicy {
                    net: net
                        .as_ref()
                        .ok_or_else(|| anyhow!("policy drl needs --checkpoint"))?,
                    params,
                }),
            };
            let report = evaluate(
                policy.as_ref(),
                trace,
                link,
                params,
                config.reward,
                config.env,
                &config.scenario.eval_seeds,
            )
            .with_context(|| format!("evaluating {} at rho {rho}", kind.as_str()))?;
            println!(
                "{} rho={rho} risky_pct={:.2} energy_reduction_pct={:.2} deadline_miss_pct={:.2}",
                report.policy,
                report.risky_pct,
                report.energy_reduction_pct,
                report.deadline_miss_pct
            );
            reports.push(report);
        }
    }
    let mut bytes = Vec::new();
    write_eval_csv(&reports, params, &mut bytes)?;
    run.write(&run.path("eval_report.csv"), &bytes)?;
    run.finish()?;
    Ok(())
}
