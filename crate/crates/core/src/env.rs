//! One-frame-per-step offloading environment with the robustness-aware
//! piecewise reward.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::channel::ChannelModel;
use crate::cost::{action_costs, CostBreakdown};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::queue::QueueModel;
use crate::scenario::{realized_map, FrameRecord, ScenarioTrace};

/// Observation handed to a policy: contextual features plus probed
/// channel capacity (Mbit/s) and server queuing delay (ms).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub features: Vec<f64>,
    pub phi_obs: f64,
    pub q_obs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Largest penalty, negative.
    pub p_penalty: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { p_penalty: -2.0 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_penalty < 0.0 && self.p_penalty.is_finite()) {
            return Err(Error::Config(format!(
                "p_penalty must be negative, got {}",
                self.p_penalty
            )));
        }
        Ok(())
    }
}

/// Which branch of the reward fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardCase {
    /// Full-fusion score under the threshold, nothing offloaded.
    UncertainLocal,
    /// Full-fusion score under the threshold, `i` pipelines offloaded: `P/(N−i)`.
    UncertainOffload,
    /// Deadline missed: `P`.
    DeadlineMiss,
    /// Deadline met with the least energy among feasible actions: 0.
    EnergyOptimal,
    /// Deadline met but a feasible action was cheaper: `P`.
    EnergySuboptimal,
}

/// What the state's `phi_obs`/`q_obs` report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// The probe measures the link the upcoming frame will experience.
    Current,
    /// The probe reports the link the previous frame experienced.
    Previous,
}

/// Link realization used for the energy-minimum comparison of the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyReference {
    Realized,
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvOptions {
    pub probe_mode: ProbeMode,
    pub energy_reference: EnergyReference,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            probe_mode: ProbeMode::Current,
            energy_reference: EnergyReference::Realized,
        }
    }
}

/// Where per-frame channel capacity and server delay come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkSource {
    Sampled {
        channel: ChannelModel,
        queue: QueueModel,
    },
    Fixed {
        phi_mbps: f64,
        delay_ms: f64,
    },
}

impl LinkSource {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Link {
        match *self {
            LinkSource::Sampled { channel, queue } => {
                let phi_mbps = channel.sample(rng);
                let delay_ms = queue.sample_delay(rng);
                Link { phi_mbps, delay_ms }
            }
            LinkSource::Fixed { phi_mbps, delay_ms } => Link { phi_mbps, delay_ms },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LinkSource::Sampled { channel, queue } => {
                channel.validate()?;
                queue.validate()
            }
            LinkSource::Fixed { phi_mbps, delay_ms } => {
                if !(*phi_mbps > 0.0) || !(*delay_ms >= 0.0) {
                    return Err(Error::domain("fixed link needs phi > 0 and delay >= 0"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub phi_mbps: f64,
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    pub case: RewardCase,
    pub action: Action,
    pub cost: CostBreakdown,
    pub realized_map: f64,
    pub map_full: f64,
    pub deadline_met: bool,
    pub frame_index: usize,
    /// Link the frame actually experienced.
    pub link: Link,
    pub done: bool,
}

/// Reward and the branch that produced it.
///
/// `feasible_energies` holds `e_total` of every action that meets the
/// deadline under the same link realization as `cost`.
pub fn classify_reward(
    params: &SystemParams,
    reward: &RewardParams,
    frame: &FrameRecord,
    action: Action,
    cost: &CostBreakdown,
    feasible_energies: &[f64],
) -> (f64, RewardCase) {
    let p = reward.p_penalty;
    if frame.map_full < params.map_th {
        if action.is_local() {
            return (0.0, RewardCase::UncertainLocal);
        }
        let remaining = f64::from(params.n_pipelines - action.offloaded());
        return (p / remaining, RewardCase::UncertainOffload);
    }
    if !cost.meets(params.l_th_ms) {
        return (p, RewardCase::DeadlineMiss);
    }
    let best = feasible_energies
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if cost.e_total_j <= best {
        (0.0, RewardCase::EnergyOptimal)
    } else {
        (p, RewardCase::EnergySuboptimal)
    }
}

pub fn compute_reward(
    params: &SystemParams,
    reward: &RewardParams,
    frame: &FrameRecord,
    action: Action,
    cost: &CostBreakdown,
    feasible_energies: &[f64],
) -> f64 {
    classify_reward(params, reward, frame, action, cost, feasible_energies).0
}

pub struct Env<'a> {
    trace: &'a ScenarioTrace,
    params: &'a SystemParams,
    reward: RewardParams,
    link: LinkSource,
    options: EnvOptions,
    rng: ChaCha8Rng,
    cursor: usize,
    /// Link drawn for the frame at `cursor`.
    upcoming: Link,
    /// Link shown to the policy for the frame at `cursor`.
    observed: Link,
    done: bool,
}

impl<'a> Env<'a> {
    pub fn new(
        trace: &'a ScenarioTrace,
        params: &'a SystemParams,
        link: LinkSource,
        reward: RewardParams,
        options: EnvOptions,
    ) -> Result<Self> {
        trace.validate()?;
        params.validate()?;
        reward.validate()?;
        link.validate()?;
        let idle = Link {
            phi_mbps: 1.0,
            delay_ms: 0.0,
        };
        Ok(Self {
            trace,
            params,
            reward,
            link,
            options,
            rng: ChaCha8Rng::seed_from_u64(0),
            cursor: 0,
            upcoming: idle,
            observed: idle,
            done: true,
        })
    }

    pub fn params(&self) -> &SystemParams {
        self.params
    }

    pub fn trace(&self) -> &ScenarioTrace {
        self.trace
    }

    pub fn n_actions(&self) -> usize {
        self.params.action_set.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Frame the next `step` will process.
    pub fn current_frame(&self) -> Option<&FrameRecord> {
        (!self.done).then(|| &self.trace.frames[self.cursor])
    }

    /// Rewinds to frame 0. Two link draws happen here: the probe history
    /// and the first frame's realization.
    pub fn reset(&mut self, seed: u64) -> State {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.cursor = 0;
        self.done = false;
        let history = self.link.draw(&mut self.rng);
        self.upcoming = self.link.draw(&mut self.rng);
        self.observed = match self.options.probe_mode {
            ProbeMode::Current => self.upcoming,
            ProbeMode::Previous => history,
        };
        self.state()
    }

    fn state(&self) -> State {
        let idx = self.cursor.min(self.trace.len() - 1);
        State {
            features: self.trace.frames[idx].features.clone(),
            phi_obs: self.observed.phi_mbps,
            q_obs: self.observed.delay_ms,
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Terminated);
        }
        if self.params.action_index(action).is_none() {
            return Err(Error::InvalidAction {
                action: action.to_string(),
                reason: "not in the configured action set".into(),
            });
        }
        let params = self.params;
        let frame = &self.trace.frames[self.cursor];
        let realized = self.upcoming;

        let costs = action_costs(
            params,
            realized.phi_mbps,
            params.phi_down(realized.phi_mbps),
            realized.delay_ms,
        )?;
        let cost = costs
            .iter()
            .find(|(a, _)| *a == action)
            .map(|(_, c)| *c)
            .expect("action is in the action set");
        let deadline_met = cost.meets(params.l_th_ms);
        let realized_map = realized_map(params, frame, action, deadline_met)?;

        let (reward, case) = match self.options.energy_reference {
            EnergyReference::Realized => {
                let feasible: Vec<f64> = costs
                    .iter()
                    .filter(|(_, c)| c.meets(params.l_th_ms))
                    .map(|(_, c)| c.e_total_j)
                    .collect();
                classify_reward(params, &self.reward, frame, action, &cost, &feasible)
            }
            EnergyReference::Observed => {
                let probe = self.observed;
                let expected = action_costs(
                    params,
                    probe.phi_mbps,
                    params.phi_down(probe.phi_mbps),
                    probe.delay_ms,
                )?;
                let feasible: Vec<f64> = expected
                    .iter()
                    .filter(|(_, c)| c.meets(params.l_th_ms))
                    .map(|(_, c)| c.e_total_j)
                    .collect();
                let chosen = expected
                    .iter()
                    .find(|(a, _)| *a == action)
                    .map(|(_, c)| *c)
                    .expect("action is in the action set");
                // Deadline judged on the realized link, energy on the probe.
                let judged = CostBreakdown {
                    l_total_ms: cost.l_total_ms,
                    e_total_j: if chosen.meets(params.l_th_ms) {
                        chosen.e_total_j
                    } else {
                        f64::INFINITY
                    },
                    ..cost
                };
                classify_reward(params, &self.reward, frame, action, &judged, &feasible)
            }
        };

        let frame_index = self.cursor;
        let map_full = frame.map_full;
        self.cursor += 1;
        self.done = self.cursor >= self.trace.len();
        if !self.done {
            self.upcoming = self.link.draw(&mut self.rng);
        }
        self.observed = match self.options.probe_mode {
            ProbeMode::Current if !self.done => self.upcoming,
            _ => realized,
        };

        Ok(StepResult {
            next_state: self.state(),
            reward,
            case,
            action,
            cost,
            realized_map,
            map_full,
            deadline_met,
            frame_index,
            link: realized,
            done: self.done,
        })
    }
}
