//! Data and energy queue recursions, the quadratic Lyapunov function and
//! empirical stability statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Next-frame data backlog (bit): `[q + a τ − r (1 − α) τ]⁺`.
pub fn update_data_queue(q: f64, a: f64, tau: f64, r: f64, alpha: f64) -> f64 {
    (q + a * tau - r * (1.0 - alpha) * tau).max(0.0)
}

/// Bits credited as served in a frame. Without `cap_by_backlog` this is the
/// raw service `r (1 − α) τ`, which may exceed what was queued.
pub fn served_bits(q: f64, a: f64, tau: f64, r: f64, alpha: f64, cap_by_backlog: bool) -> f64 {
    let service = r * (1.0 - alpha) * tau;
    if cap_by_backlog {
        service.min(q + a * tau)
    } else {
        service
    }
}

/// Next-frame battery level (J): `min{E + e − p_i (1 − α) τ, E_max}`.
///
/// A negative result means the transmit power exceeded the available
/// energy, which the allocator must never produce; it is reported as
/// [`Error::EnergyOverdraw`]. Rounding residue at the level of a few ulps of
/// the available energy is treated as an empty battery.
pub fn update_energy_queue(
    battery: f64,
    harvested: f64,
    p_i: f64,
    alpha: f64,
    tau: f64,
    e_max: f64,
) -> Result<f64> {
    let available = battery + harvested;
    let next = available - p_i * (1.0 - alpha) * tau;
    if next < 0.0 {
        if next >= -1e-12 * available {
            return Ok(0.0);
        }
        return Err(Error::EnergyOverdraw { value: next });
    }
    Ok(next.min(e_max))
}

/// `L = ½ Σ q_k² / τ²`.
pub fn lyapunov(q: &[f64], tau: f64) -> f64 {
    0.5 * q.iter().map(|x| x * x).sum::<f64>() / (tau * tau)
}

/// `ΔL^UB = ½ Σ λ_k² / τ² − L_t`; upper-bounds the true drift whenever
/// every next-frame backlog is at most its `λ_k`.
pub fn drift_upper_bound(lambda: &[f64], tau: f64, l_t: f64) -> f64 {
    lyapunov(lambda, tau) - l_t
}

/// Per-frame, per-node trajectories of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueTrace {
    /// Backlog at the start of each frame (bit).
    pub q: Vec<Vec<f64>>,
    /// Battery at the start of each frame (J).
    pub battery: Vec<Vec<f64>>,
    pub served: Vec<Vec<f64>>,
    pub harvested: Vec<Vec<f64>>,
}

impl QueueTrace {
    pub fn push(&mut self, q: Vec<f64>, battery: Vec<f64>, served: Vec<f64>, harvested: Vec<f64>) {
        self.q.push(q);
        self.battery.push(battery);
        self.served.push(served);
        self.harvested.push(harvested);
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// ‖q[t]‖₁ per frame.
    pub fn total_backlog(&self) -> Vec<f64> {
        self.q.iter().map(|q| q.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityStats {
    /// Time average of ‖q[t]‖₁.
    pub mean_total: f64,
    /// Largest ‖q[t]‖₁ seen.
    pub max_total: f64,
}

/// Empirical proxy for a finite long-run total queue length.
pub fn stability_metric(trace: &QueueTrace) -> Result<StabilityStats> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let totals = trace.total_backlog();
    let mean_total = totals.iter().sum::<f64>() / totals.len() as f64;
    let max_total = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityStats {
        mean_total,
        max_total,
    })
}
