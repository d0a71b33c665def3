//! Domain types shared by every layer: the system configuration, per-frame
//! state, decision variables and the internal unit conventions used by the
//! optimizer.
//!
//! All quantities at module boundaries are SI (W, J, s, Hz, bit, bit/s).
//! Inside the convex subproblem the variables are rescaled (see
//! [`UnitScales`]) so that noise powers around 1e-13 W and rates around
//! 1e7 bit/s do not end up in the same Hessian.

mod config_file;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config_file::{load_config, parse_config, render_config};

/// `x` dBm in watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * (watt * 1000.0).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Thermal noise over `bandwidth` Hz for a given density and receiver noise figure.
pub fn noise_power(density_dbm_hz: f64, noise_figure_db: f64, bandwidth: f64) -> f64 {
    dbm_to_watt(density_dbm_hz + linear_to_db(bandwidth) + noise_figure_db)
}

/// Every physical, protocol and algorithmic parameter of a run.
///
/// Field names double as the keys of the configuration file
/// (see [`parse_config`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of sensor nodes K.
    pub num_nodes: usize,
    /// Power-beacon antenna count M.
    pub beacon_antennas: usize,
    /// Access-point antenna count N.
    pub ap_antennas: usize,
    /// Beacon power budget (W).
    pub p_max: f64,
    /// Per-node transmit power ceiling (W).
    pub p_bar: f64,
    /// RF-to-DC conversion efficiency.
    pub eta: f64,
    /// Frame duration (s).
    pub tau: f64,
    /// System bandwidth (Hz).
    pub w_total: f64,
    /// Per-node FDMA bandwidth, always `w_total / num_nodes` after validation.
    pub w_k: f64,
    /// Noise power in one node band (W).
    pub sigma2: f64,
    /// Noise model used when `sigma2` is not given explicitly.
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// Minimum SNR (linear).
    pub gamma_min: f64,
    /// Battery capacity (J).
    pub e_max: f64,
    /// Arrival-rate interval and hard upper bound (bit/s).
    pub a_lo: f64,
    pub a_hi: f64,
    pub a_max: f64,
    pub path_loss_exp: f64,
    /// Path-loss reference distance (m); closer placements are resampled.
    pub d_ref: f64,
    pub beacon_x: f64,
    pub beacon_y: f64,
    pub ap_x: f64,
    pub ap_y: f64,
    /// Radius of the placement disk centred on the access point (m).
    pub disk_radius: f64,
    /// Drift-plus-penalty weight on the throughput utility.
    pub beta: f64,
    /// Box on the harvest-time fraction.
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Positivity floor on the backlog-deficit slack (bit).
    pub psi_floor: f64,
    /// Relative margin used to push initial points strictly inside the feasible set.
    pub strict_margin: f64,
    /// Relative objective change that stops the SCA loop.
    pub sca_tol: f64,
    pub max_sca_iter: usize,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub kkt_tol: f64,
    pub max_outer_iter: usize,
    pub max_inner_iter: usize,
    pub rng_seed: u64,
    /// Draw a fresh topology for every realization (otherwise realization 0's is reused).
    pub resample_topology: bool,
    /// Count served bits as `min(service, backlog + arrivals)` instead of raw service.
    pub cap_service_by_backlog: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

impl SystemConfig {
    /// The four-node network of the reference evaluation.
    pub fn paper_defaults() -> Self {
        let num_nodes = 4;
        let w_total = 10e6;
        let w_k = w_total / num_nodes as f64;
        let noise_density_dbm_hz = -174.0;
        let noise_figure_db = 10.0;
        Self {
            num_nodes,
            beacon_antennas: 16,
            ap_antennas: 16,
            p_max: dbm_to_watt(43.0),
            p_bar: dbm_to_watt(10.0),
            eta: 0.6,
            tau: 1e-3,
            w_total,
            w_k,
            sigma2: noise_power(noise_density_dbm_hz, noise_figure_db, w_k),
            noise_density_dbm_hz,
            noise_figure_db,
            gamma_min: db_to_linear(-10.0),
            e_max: 3e3,
            a_lo: 40e6,
            a_hi: 60e6,
            a_max: 60e6,
            path_loss_exp: 3.0,
            d_ref: 1.0,
            beacon_x: -250.0,
            beacon_y: 0.0,
            ap_x: 0.0,
            ap_y: 0.0,
            disk_radius: 250.0,
            beta: 1e-4,
            alpha_lo: 0.01,
            alpha_hi: 0.99,
            psi_floor: 1.0,
            strict_margin: 1e-3,
            sca_tol: 1e-4,
            max_sca_iter: 20,
            feas_tol: 1e-9,
            gap_tol: 1e-7,
            kkt_tol: 1e-6,
            max_outer_iter: 50,
            max_inner_iter: 100,
            rng_seed: 1,
            resample_topology: true,
            cap_service_by_backlog: false,
        }
    }

    /// Same network with `num_nodes` nodes; bandwidth and default noise follow.
    pub fn with_nodes(mut self, num_nodes: usize) -> Self {
        self.num_nodes = num_nodes;
        if num_nodes > 0 {
            self.w_k = self.w_total / num_nodes as f64;
            self.sigma2 = noise_power(self.noise_density_dbm_hz, self.noise_figure_db, self.w_k);
        }
        self
    }

    /// Checks every invariant and fills derived fields.
    ///
    /// The error message names the first violated invariant. Validating an
    /// already validated config returns an identical value.
    pub fn validate(mut self) -> Result<Self> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        }
        check(self.num_nodes >= 1, "num_nodes must be at least 1")?;
        check(self.beacon_antennas >= 1, "beacon_antennas must be at least 1")?;
        check(self.ap_antennas >= 1, "ap_antennas must be at least 1")?;
        check(self.eta > 0.0 && self.eta < 1.0, "eta out of (0,1)")?;
        check(self.tau > 0.0 && self.tau.is_finite(), "tau must be positive")?;
        check(self.w_total > 0.0 && self.w_total.is_finite(), "w_total must be positive")?;
        check(self.p_bar > 0.0 && self.p_bar.is_finite(), "p_bar must be positive")?;
        check(self.p_max > 0.0 && self.p_max.is_finite(), "p_max must be positive")?;
        check(self.a_lo >= 0.0, "a_lo must be non-negative")?;
        check(self.a_lo <= self.a_hi, "a_lo must not exceed a_hi")?;
        check(self.a_hi <= self.a_max, "a_hi must not exceed a_max")?;
        check(self.a_max.is_finite(), "a_max must be finite")?;
        check(self.sigma2 > 0.0 && self.sigma2.is_finite(), "sigma2 must be positive")?;
        check(self.gamma_min > 0.0, "gamma_min must be positive")?;
        check(self.e_max > 0.0, "e_max must be positive")?;
        check(self.beta > 0.0 && self.beta.is_finite(), "beta must be positive")?;
        check(self.path_loss_exp > 0.0, "path_loss_exp must be positive")?;
        check(self.d_ref > 0.0, "d_ref must be positive")?;
        check(self.disk_radius > 0.0, "disk_radius must be positive")?;
        check(
            0.0 < self.alpha_lo && self.alpha_lo < self.alpha_hi && self.alpha_hi < 1.0,
            "alpha box must satisfy 0 < alpha_lo < alpha_hi < 1",
        )?;
        check(self.alpha_lo <= 0.5 && 0.5 <= self.alpha_hi, "alpha box must contain 0.5")?;
        check(self.psi_floor > 0.0, "psi_floor must be positive")?;
        check(
            self.strict_margin > 0.0 && self.strict_margin < 0.5,
            "strict_margin out of (0,0.5)",
        )?;
        check(self.sca_tol > 0.0, "sca_tol must be positive")?;
        check(self.max_sca_iter >= 1, "max_sca_iter must be at least 1")?;
        check(
            self.feas_tol > 0.0 && self.gap_tol > 0.0 && self.kkt_tol > 0.0,
            "solver tolerances must be positive",
        )?;
        check(
            self.max_outer_iter >= 1 && self.max_inner_iter >= 1,
            "solver iteration limits must be at least 1",
        )?;
        self.w_k = self.w_total / self.num_nodes as f64;
        Ok(self)
    }

    /// `M · PL(d_ref)`: the largest mean downlink gain any placement can have.
    pub fn max_mean_downlink_gain(&self) -> f64 {
        self.beacon_antennas as f64
    }

    pub fn unit_scales(&self) -> UnitScales {
        UnitScales::for_config(self)
    }
}

/// Per-frame random state plus the backlogs carried over from the previous frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub t: usize,
    /// ‖g_k‖², beacon → node.
    pub g_norm2: Vec<f64>,
    /// ‖h_k‖², node → access point.
    pub h_norm2: Vec<f64>,
    /// Arrival rate (bit/s).
    pub arrivals: Vec<f64>,
    /// Data backlog (bit).
    pub queue: Vec<f64>,
    /// Battery level (J).
    pub battery: Vec<f64>,
}

impl FrameState {
    pub fn num_nodes(&self) -> usize {
        self.g_norm2.len()
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        let k = cfg.num_nodes;
        for (name, v) in [
            ("g_norm2", &self.g_norm2),
            ("h_norm2", &self.h_norm2),
            ("arrivals", &self.arrivals),
            ("queue", &self.queue),
            ("battery", &self.battery),
        ] {
            if v.len() != k {
                return Err(Error::InvalidConfig(format!(
                    "frame {name} has {} entries for {k} nodes",
                    v.len()
                )));
            }
        }
        for i in 0..k {
            let bad = |what: &str| Err(Error::InvalidConfig(format!("frame {what} at node {i}")));
            if !(self.g_norm2[i] > 0.0) || !(self.h_norm2[i] > 0.0) {
                return bad("non-positive channel gain");
            }
            if !(self.queue[i] >= 0.0) {
                return bad("negative backlog");
            }
            if !(self.battery[i] >= 0.0 && self.battery[i] <= cfg.e_max) {
                return bad("battery outside [0, e_max]");
            }
            if !(self.arrivals[i] >= 0.0 && self.arrivals[i] <= cfg.a_max) {
                return bad("arrival rate outside [0, a_max]");
            }
        }
        Ok(())
    }
}

/// Decision variables of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Beacon power toward each node (W).
    pub p_e: Vec<f64>,
    /// Node transmit power (W).
    pub p_i: Vec<f64>,
    /// Harvest-time fraction.
    pub alpha: Vec<f64>,
}

/// Auxiliary variables of the convexified subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackState {
    /// Upper bound on next-frame backlog (bit).
    pub lambda: Vec<f64>,
    /// Backlog deficit that must be served this frame (bit).
    pub psi: Vec<f64>,
    /// Upper bound on 1/(1-alpha).
    pub alpha_hat: Vec<f64>,
}

/// Conversion between SI quantities and the solver's internal units.
///
/// Rates and queues live in Mbit/s and Mbit, transmit powers in µW, energies
/// in µJ and beacon powers in units of the beacon budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScales {
    /// bit/s per internal rate unit.
    pub rate_scale: f64,
    /// W per internal transmit-power unit.
    pub power_scale: f64,
    /// J per internal energy unit.
    pub energy_scale: f64,
    /// bit per internal queue unit.
    pub queue_scale: f64,
    /// W per internal beacon-power unit.
    pub beacon_power_scale: f64,
}

impl UnitScales {
    pub fn for_config(cfg: &SystemConfig) -> Self {
        Self {
            rate_scale: 1e6,
            power_scale: 1e-6,
            energy_scale: 1e-6,
            queue_scale: 1e6,
            beacon_power_scale: cfg.p_max,
        }
    }

    pub fn identity() -> Self {
        Self {
            rate_scale: 1.0,
            power_scale: 1.0,
            energy_scale: 1.0,
            queue_scale: 1.0,
            beacon_power_scale: 1.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.rate_scale,
            self.power_scale,
            self.energy_scale,
            self.queue_scale,
            self.beacon_power_scale,
        ]
        .iter()
        .all(|s| *s > 0.0 && s.is_finite())
    }

    pub fn rate_to_internal(&self, bps: f64) -> f64 {
        bps / self.rate_scale
    }
    pub fn rate_to_si(&self, x: f64) -> f64 {
        x * self.rate_scale
    }
    pub fn power_to_internal(&self, watt: f64) -> f64 {
        watt / self.power_scale
    }
    pub fn power_to_si(&self, x: f64) -> f64 {
        x * self.power_scale
    }
    pub fn energy_to_internal(&self, joule: f64) -> f64 {
        joule / self.energy_scale
    }
    pub fn energy_to_si(&self, x: f64) -> f64 {
        x * self.energy_scale
    }
    pub fn queue_to_internal(&self, bits: f64) -> f64 {
        bits / self.queue_scale
    }
    pub fn queue_to_si(&self, x: f64) -> f64 {
        x * self.queue_scale
    }
    pub fn beacon_to_internal(&self, watt: f64) -> f64 {
        watt / self.beacon_power_scale
    }
    pub fn beacon_to_si(&self, x: f64) -> f64 {
        x * self.beacon_power_scale
    }
    /// Objective values (bit²/s²) per internal objective unit.
    pub fn objective_scale(&self) -> f64 {
        self.queue_scale * self.queue_scale
    }
}
