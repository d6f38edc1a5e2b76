//! Calibration constants for the perception stack and the offloading link.
//!
//! Units: durations in ms, rates in Mbit/s (numerically kbit/ms), sizes in
//! kbit, powers in W. A duration in ms times a power in W is an energy in mJ.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};

/// How the local tail branch and the network round trip combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyComposition {
    /// `L = L_local + L_tx + L_server + L_rx`, read literally.
    Additive,
    /// Local tails run while the offloaded outputs are in flight:
    /// `L = N·L_enc + max((N−i)·L_tail, L_tx + L_server + L_rx)`.
    Overlapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_pipelines: u32,
    /// Pipeline identifiers in canonical order; local-subset keys follow it.
    pub pipelines: Vec<String>,
    pub l_encoder_ms: f64,
    pub l_tail_ms: f64,
    pub p_local_w: f64,
    pub p_tx_w: f64,
    pub p_idle_w: f64,
    pub b_up_kbit: f64,
    pub b_down_kbit: f64,
    /// Fixed downlink capacity; `0` means the downlink tracks the uplink draw.
    pub phi_down_mbps: f64,
    pub l_th_ms: f64,
    pub map_th: f64,
    pub action_set: Vec<Action>,
    pub offload_order: Vec<String>,
    pub latency_composition: LatencyComposition,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            n_pipelines: 4,
            pipelines: ["radar", "lidar", "camera_left", "camera_right"]
                .map(String::from)
                .to_vec(),
            l_encoder_ms: 3.78,
            // 17.03 ms for one full pipeline minus its 3.78 ms encoder.
            l_tail_ms: 13.25,
            // 0.48 J over 68.12 ms of four-pipeline execution.
            p_local_w: 7.046,
            p_tx_w: 1.3,
            p_idle_w: 0.0,
            // 11.57 kB of 8-bit quantized encoder output.
            b_up_kbit: 92.56,
            b_down_kbit: 2.0,
            phi_down_mbps: 0.0,
            l_th_ms: 68.12,
            map_th: 0.68,
            action_set: vec![Action::LOCAL, Action::offload(2), Action::offload(3)],
            offload_order: ["camera_left", "camera_right", "lidar"]
                .map(String::from)
                .to_vec(),
            latency_composition: LatencyComposition::Overlapped,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_pipelines;
        if n == 0 {
            return Err(Error::Config("n_pipelines must be positive".into()));
        }
        if self.pipelines.len() != n as usize {
            return Err(Error::Config(format!(
                "pipelines lists {} names but n_pipelines = {n}",
                self.pipelines.len()
            )));
        }
        for (name, v) in [
            ("l_encoder_ms", self.l_encoder_ms),
            ("l_tail_ms", self.l_tail_ms),
            ("b_up_kbit", self.b_up_kbit),
            ("l_th_ms", self.l_th_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("p_local_w", self.p_local_w),
            ("p_tx_w", self.p_tx_w),
            ("p_idle_w", self.p_idle_w),
            ("b_down_kbit", self.b_down_kbit),
            ("phi_down_mbps", self.phi_down_mbps),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.map_th) {
            return Err(Error::Config(format!(
                "map_th must lie in [0, 1], got {}",
                self.map_th
            )));
        }
        for a in &self.action_set {
            a.check(n)?;
        }
        let top = Action::offload(n - 1);
        if !self.action_set.contains(&Action::LOCAL) || !self.action_set.contains(&top) {
            return Err(Error::Config(format!(
                "action_set must contain offload_0 and {top}"
            )));
        }
        let mut sorted = self.action_set.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.action_set {
            return Err(Error::Config(
                "action_set must be strictly increasing in i".into(),
            ));
        }
        if self.offload_order.len() >= n as usize {
            return Err(Error::Config(
                "offload_order must leave at least one pipeline local".into(),
            ));
        }
        if (self.offload_order.len() as u32) < n - 1 {
            return Err(Error::Config(format!(
                "offload_order needs {} entries to cover {top}",
                n - 1
            )));
        }
        for (k, name) in self.offload_order.iter().enumerate() {
            if !self.pipelines.contains(name) {
                return Err(Error::Config(format!(
                    "offload_order names unknown pipeline `{name}`"
                )));
            }
            if self.offload_order[..k].contains(name) {
                return Err(Error::Config(format!("offload_order repeats `{name}`")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> f64 {
        f64::from(self.n_pipelines)
    }

    /// Downlink capacity paired with an uplink draw.
    pub fn phi_down(&self, phi_up_mbps: f64) -> f64 {
        if self.phi_down_mbps > 0.0 {
            self.phi_down_mbps
        } else {
            phi_up_mbps
        }
    }

    /// Pipelines that keep running locally under `action`, in canonical order.
    pub fn local_subset(&self, action: Action) -> Vec<&str> {
        let offloaded = &self.offload_order[..action.offloaded() as usize];
        self.pipelines
            .iter()
            .filter(|p| !offloaded.contains(p))
            .map(String::as_str)
            .collect()
    }

    /// Key of the partial-fusion score that applies when the offloaded
    /// outputs of `action` miss the deadline, e.g. `radar_lidar`.
    pub fn subset_key(&self, action: Action) -> String {
        self.local_subset(action).join("_")
    }

    /// Partial-fusion keys for every offloading action in the action set,
    /// ordered by increasing `i` (shrinking local subset).
    pub fn partial_keys(&self) -> Vec<String> {
        self.action_set
            .iter()
            .filter(|a| !a.is_local())
            .map(|&a| self.subset_key(a))
            .collect()
    }

    pub fn action_index(&self, action: Action) -> Option<usize> {
        self.action_set.iter().position(|&a| a == action)
    }
}
