//! Decision rules compared in the evaluation: local-only, the
//! robustness-agnostic energy minimizer, the oracle that knows each frame's
//! full-fusion score, and the trained Q-network.

use std::fmt;
use std::str::FromStr;

use crate::action::Action;
use crate::agent::{argmax, QNetwork};
use crate::cost::min_energy_feasible;
use crate::env::State;
use crate::error::{Error, Result};
use crate::params::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rationale {
    LocalFixed,
    EnergyMin,
    RobustnessOverride,
    QGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDecision {
    pub action: Action,
    pub rationale: Rationale,
}

/// What a policy may look at for one frame. Only the oracle reads
/// `map_full`.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub state: &'a State,
    pub map_full: f64,
}

pub trait Policy: Sync {
    fn name(&self) -> &str;
    fn decide(&self, obs: Observation<'_>) -> Result<PolicyDecision>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Local,
    RAgnostic,
    Oracle,
    Drl,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [Self::Local, Self::RAgnostic, Self::Oracle, Self::Drl];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::RAgnostic => "ragnostic",
            Self::Oracle => "oracle",
            Self::Drl => "drl",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown policy `{s}` (local, ragnostic, oracle, drl)"
                ))
            })
    }
}

pub fn local_policy(_state: &State) -> PolicyDecision {
    PolicyDecision {
        action: Action::LOCAL,
        rationale: Rationale::LocalFixed,
    }
}

/// Cheapest action predicted to meet the deadline at the probed link.
pub fn r_agnostic_policy(
    params: &SystemParams,
    phi_obs: f64,
    q_obs: f64,
) -> Result<PolicyDecision> {
    let action = min_energy_feasible(params, phi_obs, params.phi_down(phi_obs), q_obs)?;
    Ok(PolicyDecision {
        action,
        rationale: Rationale::EnergyMin,
    })
}

/// Forces local execution on frames under the robustness threshold,
/// otherwise behaves like the R-agnostic rule.
pub fn oracle_policy(
    params: &SystemParams,
    phi_obs: f64,
    q_obs: f64,
    map_full: f64,
) -> Result<PolicyDecision> {
    if map_full < params.map_th {
        return Ok(PolicyDecision {
            action: Action::LOCAL,
            rationale: Rationale::RobustnessOverride,
        });
    }
    r_agnostic_policy(params, phi_obs, q_obs)
}

pub fn drl_policy(net: &QNetwork, params: &SystemParams, state: &State) -> Result<PolicyDecision> {
    let q = net.forward(state)?;
    let action = *params.action_set.get(argmax(&q)).ok_or(Error::Dimension {
        expected: params.action_set.len(),
        got: q.len(),
    })?;
    Ok(PolicyDecision {
        action,
        rationale: Rationale::QGreedy,
    })
}

pub struct LocalPolicy;

impl Policy for LocalPolicy {
    fn name(&self) -> &str {
        "local"
    }

    fn decide(&self, obs: Observation<'_>) -> Result<PolicyDecision> {
        Ok(local_policy(obs.state))
    }
}

pub struct RAgnosticPolicy<'a> {
    pub params: &'a SystemParams,
}

impl Policy for RAgnosticPolicy<'_> {
    fn name(&self) -> &str {
        "ragnostic"
    }

    fn decide(&self, obs: Observation<'_>) -> Result<PolicyDecision> {
        r_agnostic_policy(self.params, obs.state.phi_obs, obs.state.q_obs)
    }
}

pub struct OraclePolicy<'a> {
    pub params: &'a SystemParams,
}

impl Policy for OraclePolicy<'_> {
    fn name(&self) -> &str {
        "oracle"
    }

    fn decide(&self, obs: Observation<'_>) -> Result<PolicyDecision> {
        oracle_policy(
            self.params,
            obs.state.phi_obs,
            obs.state.q_obs,
            obs.map_full,
        )
    }
}

pub struct DrlPolicy<'a> {
    pub net: &'a QNetwork,
    pub params: &'a SystemParams,
}

impl Policy for DrlPolicy<'_> {
    fn name(&self) -> &str {
        "drl"
    }

    fn decide(&self, obs: Observation<'_>) -> Result<PolicyDecision> {
        drl_policy(self.net, self.params, obs.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Dense;

    const A0: Action = Action::LOCAL;
    const A3: Action = Action::offload(3);

    fn state(phi: f64, q: f64) -> State {
        State {
            features: vec![0.0; 4],
            phi_obs: phi,
            q_obs: q,
        }
    }

    #[test]
    fn local_always_local() {
        for s in [state(1.0, 0.0), state(1000.0, 0.0), state(0.1, 900.0)] {
            assert_eq!(local_policy(&s).action, A0);
        }
    }

    #[test]
    fn r_agnostic_examples() {
        let p = SystemParams::default();
        assert_eq!(r_agnostic_policy(&p, 8.0, 15.0).unwrap().action, A3);
        assert_eq!(r_agnostic_policy(&p, 2.0, 15.0).unwrap().action, A0);
        let blind = RAgnosticPolicy { params: &p };
        let s = state(20.0, 2.0);
        let hard = blind
            .decide(Observation {
                state: &s,
                map_full: 0.1,
            })
            .unwrap();
        assert_eq!(hard.action, A3);
    }

    #[test]
    fn oracle_examples() {
        let p = SystemParams::default();
        let d = oracle_policy(&p, 10.0, 15.0, 0.50).unwrap();
        assert_eq!((d.action, d.rationale), (A0, Rationale::RobustnessOverride));
        assert_eq!(oracle_policy(&p, 10.0, 2.0, 0.90).unwrap().action, A3);
        assert_eq!(oracle_policy(&p, 2.0, 15.0, 0.90).unwrap().action, A0);
    }

    #[test]
    fn drl_is_greedy_over_the_action_set() {
        let p = SystemParams::default();
        let ctx = Dense::zeros(4, 1, true);
        let mut head = Dense::zeros(3, 3, false);
        head.bias = vec![0.1, 0.9, 0.3];
        let net = QNetwork::from_layers(vec![ctx], vec![head], 30.0, 68.12).unwrap();
        let d = drl_policy(&net, &p, &state(5.0, 5.0)).unwrap();
        assert_eq!(d.action, Action::offload(2));
        assert_eq!(d.rationale, Rationale::QGreedy);
    }

    #[test]
    fn policy_names_parse() {
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }
}
