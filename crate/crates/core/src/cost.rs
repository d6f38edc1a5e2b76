//! Deterministic end-to-end latency and energy of one frame under one
//! operating mode.

use crate::action::Action;
use crate::error::{Error, Result};
use crate::params::{LatencyComposition, SystemParams};

/// Slack used when comparing a latency against the deadline, so that the
/// local-only latency (which defines the deadline) is never rejected on
/// floating-point noise.
pub const DEADLINE_EPS_MS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub l_local_ms: f64,
    pub l_tx_ms: f64,
    pub l_server_ms: f64,
    pub l_rx_ms: f64,
    pub e_local_j: f64,
    pub e_tx_j: f64,
    pub e_idle_j: f64,
    pub e_rx_j: f64,
    pub l_total_ms: f64,
    pub e_total_j: f64,
}

impl CostBreakdown {
    pub fn meets(&self, l_th_ms: f64) -> bool {
        self.l_total_ms <= l_th_ms + DEADLINE_EPS_MS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommCost {
    pub l_tx_ms: f64,
    pub e_tx_j: f64,
    pub l_rx_ms: f64,
    pub e_rx_j: f64,
}

fn checked(params: &SystemParams, action: Action) -> Result<u32> {
    action.check(params.n_pipelines).map(Action::offloaded)
}

/// `N·L_enc + (N−i)·L_tail`.
pub fn latency_local(params: &SystemParams, action: Action) -> Result<f64> {
    let i = checked(params, action)?;
    let n = params.n_pipelines;
    Ok(params.n() * params.l_encoder_ms + f64::from(n - i) * params.l_tail_ms)
}

pub fn energy_local(params: &SystemParams, action: Action) -> Result<f64> {
    Ok(latency_local(params, action)? * params.p_local_w / 1e3)
}

/// Uplink and downlink time and radio energy for the `i` offloaded outputs.
/// Rates are Mbit/s, which is kbit/ms, so `kbit / rate` is already in ms.
pub fn comm_cost(
    params: &SystemParams,
    action: Action,
    phi_up_mbps: f64,
    phi_down_mbps: f64,
) -> Result<CommCost> {
    let i = checked(params, action)?;
    if !(phi_up_mbps > 0.0) || !(phi_down_mbps > 0.0) {
        return Err(Error::domain(format!(
            "channel capacity must be positive (up {phi_up_mbps}, down {phi_down_mbps})"
        )));
    }
    if i == 0 {
        return Ok(CommCost::default());
    }
    let i = f64::from(i);
    let l_tx_ms = i * params.b_up_kbit / phi_up_mbps;
    let l_rx_ms = i * params.b_down_kbit / phi_down_mbps;
    Ok(CommCost {
        l_tx_ms,
        e_tx_j: l_tx_ms * params.p_tx_w / 1e3,
        l_rx_ms,
        e_rx_j: l_rx_ms * params.p_tx_w / 1e3,
    })
}

pub fn total_cost(
    params: &SystemParams,
    action: Action,
    phi_up_mbps: f64,
    phi_down_mbps: f64,
    server_delay_ms: f64,
) -> Result<CostBreakdown> {
    if !(server_delay_ms >= 0.0) {
        return Err(Error::domain(format!(
            "server delay must be non-negative, got {server_delay_ms}"
        )));
    }
    let comm = comm_cost(params, action, phi_up_mbps, phi_down_mbps)?;
    let l_local_ms = latency_local(params, action)?;
    let e_local_j = l_local_ms * params.p_local_w / 1e3;
    if action.is_local() {
        return Ok(CostBreakdown {
            l_local_ms,
            e_local_j,
            l_total_ms: l_local_ms,
            e_total_j: e_local_j,
            ..CostBreakdown::default()
        });
    }

    let l_server_ms = server_delay_ms;
    let round_trip = comm.l_tx_ms + l_server_ms + comm.l_rx_ms;
    let (l_total_ms, idle_ms) = match params.latency_composition {
        LatencyComposition::Additive => (l_local_ms + round_trip, round_trip),
        LatencyComposition::Overlapped => {
            let encoders = params.n() * params.l_encoder_ms;
            let tails = l_local_ms - encoders;
            (
                encoders + tails.max(round_trip),
                (round_trip - tails).max(0.0),
            )
        }
    };
    let e_idle_j = idle_ms * params.p_idle_w / 1e3;

    Ok(CostBreakdown {
        l_local_ms,
        l_tx_ms: comm.l_tx_ms,
        l_server_ms,
        l_rx_ms: comm.l_rx_ms,
        e_local_j,
        e_tx_j: comm.e_tx_j,
        e_idle_j,
        e_rx_j: comm.e_rx_j,
        l_total_ms,
        e_total_j: e_local_j + comm.e_tx_j + e_idle_j + comm.e_rx_j,
    })
}

/// Cost of every action in the action set under one link realization,
/// in action-set order.
pub fn action_costs(
    params: &SystemParams,
    phi_up_mbps: f64,
    phi_down_mbps: f64,
    server_delay_ms: f64,
) -> Result<Vec<(Action, CostBreakdown)>> {
    params
        .action_set
        .iter()
        .map(|&a| {
            Ok((
                a,
                total_cost(params, a, phi_up_mbps, phi_down_mbps, server_delay_ms)?,
            ))
        })
        .collect()
}

/// Actions in the action set that meet the deadline.
pub fn feasible_actions(
    params: &SystemParams,
    phi_up_mbps: f64,
    phi_down_mbps: f64,
    server_delay_ms: f64,
) -> Result<Vec<Action>> {
    Ok(
        action_costs(params, phi_up_mbps, phi_down_mbps, server_delay_ms)?
            .into_iter()
            .filter(|(_, c)| c.meets(params.l_th_ms))
            .map(|(a, _)| a)
            .collect(),
    )
}

/// Energy-minimal action among those meeting the deadline. Exact ties go
/// to the smaller `i`; falls back to `offload_0` when nothing is feasible.
pub fn min_energy_feasible(
    params: &SystemParams,
    phi_up_mbps: f64,
    phi_down_mbps: f64,
    server_delay_ms: f64,
) -> Result<Action> {
    let costs = action_costs(params, phi_up_mbps, phi_down_mbps, server_delay_ms)?;
    Ok(argmin_feasible(params.l_th_ms, &costs).unwrap_or(Action::LOCAL))
}

pub(crate) fn argmin_feasible(l_th_ms: f64, costs: &[(Action, CostBreakdown)]) -> Option<Action> {
    let mut best: Option<(Action, f64)> = None;
    for &(a, c) in costs {
        if !c.meets(l_th_ms) {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, e)) => c.e_total_j < e || (c.e_total_j == e && a < b),
        };
        if better {
            best = Some((a, c.e_total_j));
        }
    }
    best.map(|(a, _)| a)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A0: Action = Action::LOCAL;
    const A2: Action = Action::offload(2);
    const A3: Action = Action::offload(3);

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Independent oracle: walk the pipelines one by one and add up the
    /// stages each of them executes locally.
    fn staged_local_latency(p: &SystemParams, i: u32) -> f64 {
        (0..p.n_pipelines)
            .map(|k| {
                p.l_encoder_ms
                    + if k < p.n_pipelines - i {
                        p.l_tail_ms
                    } else {
                        0.0
                    }
            })
            .sum()
    }

    fn no_downlink() -> SystemParams {
        SystemParams {
            b_down_kbit: 0.0,
            ..SystemParams::default()
        }
    }

    #[test]
    fn local_latency_table_values() {
        let p = SystemParams::default();
        assert!(close(latency_local(&p, A0).unwrap(), 68.12, 1e-9));
        assert!(close(latency_local(&p, A3).unwrap(), 28.37, 1e-9));
        for i in 0..4 {
            let a = Action::offload(i);
            assert!(close(
                latency_local(&p, a).unwrap(),
                staged_local_latency(&p, i),
                1e-12
            ));
        }
        let one = SystemParams {
            n_pipelines: 1,
            pipelines: vec!["radar".into()],
            action_set: vec![A0],
            offload_order: vec![],
            ..SystemParams::default()
        };
        assert!(close(latency_local(&one, A0).unwrap(), 17.03, 1e-9));
    }

    #[test]
    fn local_latency_rejects_offloading_all() {
        let p = SystemParams::default();
        assert!(latency_local(&p, Action::offload(4)).is_err());
    }

    #[test]
    fn local_energy() {
        let p = SystemParams::default();
        assert!(close(energy_local(&p, A0).unwrap(), 0.48, 0.005));
        assert!(close(
            energy_local(&p, A3).unwrap(),
            28.37 * 7.046 / 1e3,
            1e-12
        ));
        let zero = SystemParams {
            p_local_w: 0.0,
            ..SystemParams::default()
        };
        assert_eq!(energy_local(&zero, A2).unwrap(), 0.0);
    }

    #[test]
    fn transmission_cost() {
        let p = SystemParams::default();
        let c = comm_cost(&p, A3, 8.0, 8.0).unwrap();
        assert!(close(c.l_tx_ms, 34.71, 1e-9));
        assert!(close(c.e_tx_j, 34.71 * 1.3 / 1e3, 1e-12));
        let c = comm_cost(&p, A2, 4.0, 4.0).unwrap();
        assert!(close(c.l_tx_ms, 46.28, 1e-9));
        assert_eq!(comm_cost(&p, A0, 3.0, 3.0).unwrap(), CommCost::default());
        assert!(comm_cost(&p, A2, 0.0, 1.0).is_err());
        assert!(comm_cost(&p, A2, 1.0, -1.0).is_err());
    }

    #[test]
    fn overlapped_total_examples() {
        let p = no_downlink();
        let c = total_cost(&p, A3, 8.0, 8.0, 15.0).unwrap();
        assert!(close(c.l_total_ms, 64.83, 1e-9));
        assert!(c.meets(p.l_th_ms));

        let c = total_cost(&p, A2, 4.9, 4.9, 15.0).unwrap();
        let expected = (15.12_f64 + 185.12 / 4.9 + 15.0).max(41.62);
        assert!(close(c.l_total_ms, expected, 1e-9));
        assert!(close(c.l_total_ms, 67.90, 0.01));
        assert!(c.meets(p.l_th_ms));
    }

    #[test]
    fn local_total_ignores_link() {
        let p = SystemParams::default();
        for (phi, q) in [(0.5, 0.0), (8.0, 15.0), (100.0, 500.0)] {
            let c = total_cost(&p, A0, phi, phi, q).unwrap();
            assert!(close(c.l_total_ms, 68.12, 1e-9));
            assert!(close(c.e_total_j, 0.48, 0.005));
            assert_eq!((c.l_tx_ms, c.l_server_ms, c.l_rx_ms), (0.0, 0.0, 0.0));
            assert_eq!((c.e_tx_j, c.e_idle_j, c.e_rx_j), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn additive_total_sums_components() {
        let p = SystemParams {
            latency_composition: LatencyComposition::Additive,
            p_idle_w: 0.5,
            ..SystemParams::default()
        };
        let c = total_cost(&p, A2, 6.0, 6.0, 12.0).unwrap();
        let sum = c.l_local_ms + c.l_tx_ms + c.l_server_ms + c.l_rx_ms;
        assert!(close(c.l_total_ms, sum, 1e-12));
        let idle = (c.l_tx_ms + c.l_server_ms + c.l_rx_ms) * 0.5 / 1e3;
        assert!(close(c.e_idle_j, idle, 1e-15));
        assert_eq!(c.e_total_j, c.e_local_j + c.e_tx_j + c.e_idle_j + c.e_rx_j);
    }

    #[test]
    fn overlapped_idle_counts_only_waiting_time() {
        let p = SystemParams {
            p_idle_w: 1.0,
            ..no_downlink()
        };
        // Round trip 34.71 + 15 = 49.71 ms against 13.25 ms of local tail.
        let c = total_cost(&p, A3, 8.0, 8.0, 15.0).unwrap();
        assert!(close(c.e_idle_j, (49.71 - 13.25) / 1e3, 1e-12));
        // Round trip shorter than the local tails: no idling.
        let c = total_cost(&p, Action::offload(1), 1000.0, 1000.0, 0.0).unwrap();
        assert_eq!(c.e_idle_j, 0.0);
    }

    #[test]
    fn negative_delay_is_rejected() {
        let p = SystemParams::default();
        assert!(total_cost(&p, A2, 8.0, 8.0, -1.0).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let p = SystemParams::default();
        assert_eq!(feasible_actions(&p, 2.0, 2.0, 15.0).unwrap(), vec![A0]);
        assert_eq!(
            feasible_actions(&p, 8.0, 8.0, 15.0).unwrap(),
            vec![A0, A2, A3]
        );
        assert_eq!(feasible_actions(&p, 1e12, 1e12, 0.0).unwrap(), p.action_set);
    }

    #[test]
    fn min_energy_examples() {
        let p = SystemParams::default();
        assert_eq!(min_energy_feasible(&p, 8.0, 8.0, 15.0).unwrap(), A3);
        assert_eq!(min_energy_feasible(&p, 2.0, 2.0, 15.0).unwrap(), A0);
        assert_eq!(min_energy_feasible(&p, 5.0, 5.0, 15.0).unwrap(), A2);
        // Queue so long nothing offloaded can make it.
        assert_eq!(min_energy_feasible(&p, 8.0, 8.0, 500.0).unwrap(), A0);
    }

    #[test]
    fn energy_ties_prefer_fewer_offloads() {
        // Free radio and free tails: every action costs the encoders only.
        let p = SystemParams {
            p_tx_w: 0.0,
            l_tail_ms: 1e-9,
            ..SystemParams::default()
        };
        let costs = vec![
            (
                A0,
                CostBreakdown {
                    e_total_j: 1.0,
                    ..Default::default()
                },
            ),
            (
                A2,
                CostBreakdown {
                    e_total_j: 1.0,
                    ..Default::default()
                },
            ),
            (
                A3,
                CostBreakdown {
                    e_total_j: 1.0,
                    ..Default::default()
                },
            ),
        ];
        assert_eq!(argmin_feasible(p.l_th_ms, &costs), Some(A0));
        let costs = vec![
            (
                A3,
                CostBreakdown {
                    e_total_j: 0.5,
                    ..Default::default()
                },
            ),
            (
                A2,
                CostBreakdown {
                    e_total_j: 0.5,
                    ..Default::default()
                },
            ),
        ];
        assert_eq!(argmin_feasible(p.l_th_ms, &costs), Some(A2));
    }
}
