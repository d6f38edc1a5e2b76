//! Truncated-geometric server queue: probability `q_c` that an offloaded
//! task finds `c` tasks ahead of it, and the resulting server delay.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueModel {
    /// Average server load, in (0, 1).
    pub rho: f64,
    /// Queue capacity `C`.
    pub queue_cap: u32,
    /// Service time of one task, ms.
    pub t_service_ms: f64,
}

impl Default for QueueModel {
    fn default() -> Self {
        Self {
            rho: 0.9,
            queue_cap: 4000,
            t_service_ms: 1.5,
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(format!(
            "server load rho must lie in (0, 1), got {rho}"
        )));
    }
    Ok(())
}

/// `q_c = (1−ρ)ρ^c / (1−ρ^{C+1})` for `c = 0..=C`.
pub fn queue_pmf(rho: f64, cap: u32) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if cap == 0 {
        return Err(Error::domain("queue capacity must be at least 1"));
    }
    let norm = (1.0 - rho) / truncation_mass(rho, cap);
    let ln_rho = rho.ln();
    Ok((0..=cap)
        .map(|c| norm * (f64::from(c) * ln_rho).exp())
        .collect())
}

/// `1 − ρ^{C+1}`, computed without cancellation for ρ close to 1.
fn truncation_mass(rho: f64, cap: u32) -> f64 {
    -(f64::from(cap + 1) * rho.ln()).exp_m1()
}

impl QueueModel {
    pub fn new(rho: f64, queue_cap: u32, t_service_ms: f64) -> Result<Self> {
        let model = Self {
            rho,
            queue_cap,
            t_service_ms,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.queue_cap == 0 {
            return Err(Error::domain("queue capacity must be at least 1"));
        }
        if !(self.t_service_ms > 0.0 && self.t_service_ms.is_finite()) {
            return Err(Error::domain(format!(
                "t_service_ms must be positive, got {}",
                self.t_service_ms
            )));
        }
        Ok(())
    }

    /// Queue position for CDF level `u ∈ [0, 1)`: the smallest `c` with
    /// `(1 − ρ^{c+1}) / (1 − ρ^{C+1}) ≥ u`, solved in closed form.
    pub fn position_at(&self, u: f64) -> u32 {
        let scaled = u * truncation_mass(self.rho, self.queue_cap);
        // ρ^{c+1} ≤ 1 − scaled  ⇔  c + 1 ≥ ln(1 − scaled) / ln ρ
        let k = ((-scaled).ln_1p() / self.rho.ln()).ceil();
        let c = (k - 1.0).max(0.0);
        if c >= f64::from(self.queue_cap) {
            self.queue_cap
        } else {
            c as u32
        }
    }

    pub fn sample_position<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.position_at(rng.random::<f64>())
    }

    /// Server delay for a task behind `position` others: `(c+1)·t_service`.
    pub fn delay_for(&self, position: u32) -> f64 {
        f64::from(position + 1) * self.t_service_ms
    }

    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.delay_for(self.sample_position(rng))
    }

    /// Analytic `Σ c·q_c`.
    pub fn mean_position(&self) -> f64 {
        let rho = self.rho;
        let n1 = f64::from(self.queue_cap + 1);
        let tail = (n1 * rho.ln()).exp();
        rho / (1.0 - rho) - n1 * tail / (1.0 - tail)
    }

    pub fn mean_delay(&self) -> f64 {
        (self.mean_position() + 1.0) * self.t_service_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_pmf() {
        let pmf = queue_pmf(0.5, 2).unwrap();
        let expected = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (a, b) in pmf.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_server_limit() {
        let pmf = queue_pmf(1e-12, 10).unwrap();
        assert!((pmf[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn heavy_load_large_cap() {
        let pmf = queue_pmf(0.9, 4000).unwrap();
        assert!((pmf[0] - 0.1).abs() < 1e-12);
        let mean: f64 = pmf.iter().enumerate().map(|(c, q)| c as f64 * q).sum();
        assert!((mean - 9.0).abs() < 1e-9);
        let m = QueueModel::default();
        assert!((m.mean_position() - mean).abs() < 1e-9);
    }

    #[test]
    fn pmf_domain_errors() {
        assert!(queue_pmf(1.0, 4).is_err());
        assert!(queue_pmf(0.0, 4).is_err());
        assert!(queue_pmf(1.2, 4).is_err());
        assert!(queue_pmf(0.5, 0).is_err());
        assert!(QueueModel::new(0.5, 4, 0.0).is_err());
    }

    #[test]
    fn inverse_cdf_matches_pmf_boundaries() {
        let m = QueueModel::new(0.5, 2, 1.0).unwrap();
        assert_eq!(m.position_at(0.0), 0);
        assert_eq!(m.position_at(4.0 / 7.0 - 1e-9), 0);
        assert_eq!(m.position_at(4.0 / 7.0 + 1e-9), 1);
        assert_eq!(m.position_at(6.0 / 7.0 + 1e-9), 2);
        assert_eq!(m.position_at(1.0 - 1e-15), 2);
        assert_eq!(m.delay_for(m.position_at(0.1)), 1.0);
    }

    #[test]
    fn analytic_mean_matches_pmf_on_truncated_queue() {
        for (rho, cap) in [(0.5, 4), (0.97, 100), (0.99, 100)] {
            let m = QueueModel::new(rho, cap, 1.0).unwrap();
            let pmf = queue_pmf(rho, cap).unwrap();
            let mean: f64 = pmf.iter().enumerate().map(|(c, q)| c as f64 * q).sum();
            assert!((m.mean_position() - mean).abs() < 1e-9, "{rho} {cap}");
        }
    }

    #[test]
    fn mean_delay_at_operating_point() {
        let m = QueueModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let mean = (0..n).map(|_| m.sample_delay(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean / 15.0 - 1.0).abs() < 0.02, "mean delay {mean}");

        let heavy = QueueModel::new(0.99, 4000, 1.5).unwrap();
        assert!((heavy.mean_delay() - 150.0).abs() < 1e-6);
    }
}
