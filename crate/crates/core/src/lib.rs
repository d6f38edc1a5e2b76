//! Trace-driven simulator for robustness-aware task offloading in a
//! multi-sensor perception stack with late fusion.
//!
//! The crate covers the latency/energy cost model ([`cost`]), the Rayleigh
//! channel ([`channel`]) and truncated-geometric server queue ([`queue`]),
//! scenario traces ([`scenario`]), the offloading environment and its
//! piecewise reward ([`env`]), a Double-DQN agent ([`agent`]), baseline
//! policies ([`policies`]) and the evaluation harness ([`metrics`]).

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod agent;
pub mod channel;
pub mod config;
pub mod cost;
pub mod env;
pub mod error;
pub mod metrics;
pub mod params;
pub mod policies;
pub mod queue;
pub mod scenario;

pub use action::Action;
pub use agent::{QNetwork, TrainConfig};
pub use channel::{fit_rayleigh, ChannelModel};
pub use config::{Config, ScenarioConfig};
pub use cost::{
    comm_cost, energy_local, feasible_actions, latency_local, min_energy_feasible, total_cost,
    CostBreakdown,
};
pub use env::{
    compute_reward, EnergyReference, Env, EnvOptions, LinkSource, ProbeMode, RewardCase,
    RewardParams, State, StepResult,
};
pub use error::{Error, Result};
pub use metrics::{evaluate, sweep_channel, sweep_queue, EvalReport};
pub use params::{LatencyComposition, SystemParams};
pub use policies::{Policy, PolicyDecision, PolicyKind};
pub use queue::{queue_pmf, QueueModel};
pub use scenario::{
    generate_synthetic, load_trace, realized_map, FrameRecord, GeneratorParams, ScenarioTrace,
};
