//! Assembly of the convex program solved at every SCA iteration.
//!
//! All quantities are converted to the internal units of [`UnitScales`]
//! before they reach the solver: rates in Mbit/s, queues in Mbit, transmit
//! powers in µW, energies in µJ and beacon powers as a fraction of `P_max`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameState, SystemConfig, UnitScales};
use crate::phy::min_power;
use crate::solver::{Atom, Constraint, ConstraintClass, ConvexProblem, Expr};

use super::surrogate::PowerCoupling;

/// Allocation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Joint optimization of every variable.
    Proposed,
    /// Beacon budget split evenly across nodes.
    EqualPower,
    /// Every node transmits with all the energy it harvested this frame.
    MaxPower,
    /// Harvest and transmit phases of equal length.
    EqualTime,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::EqualPower,
        Scheme::MaxPower,
        Scheme::EqualTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::EqualPower => "equal-power",
            Scheme::MaxPower => "max-power",
            Scheme::EqualTime => "equal-time",
        }
    }

    /// Whether the battery may be spent on transmission.
    pub fn uses_battery(self) -> bool {
        self != Scheme::MaxPower
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

/// Position of each variable in the solver vector: six blocks of `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub k: usize,
}

impl VarLayout {
    pub fn new(k: usize) -> Self {
        Self { k }
    }
    pub fn n(&self) -> usize {
        6 * self.k
    }
    pub fn p_e(&self, i: usize) -> usize {
        i
    }
    pub fn p_i(&self, i: usize) -> usize {
        self.k + i
    }
    pub fn alpha(&self, i: usize) -> usize {
        2 * self.k + i
    }
    pub fn lambda(&self, i: usize) -> usize {
        3 * self.k + i
    }
    pub fn psi(&self, i: usize) -> usize {
        4 * self.k + i
    }
    pub fn alpha_hat(&self, i: usize) -> usize {
        5 * self.k + i
    }
}

/// Point around which the surrogates are built (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPoint {
    pub alpha_bar: Vec<f64>,
    /// W.
    pub p_e_bar: Vec<f64>,
    /// bit.
    pub psi_bar: Vec<f64>,
    pub alpha_hat_bar: Vec<f64>,
}

impl ExpansionPoint {
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        let k = cfg.num_nodes;
        for v in [&self.alpha_bar, &self.p_e_bar, &self.psi_bar, &self.alpha_hat_bar] {
            if v.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    got: v.len(),
                });
            }
        }
        for i in 0..k {
            let a = self.alpha_bar[i];
            let ok = a >= cfg.alpha_lo
                && a <= cfg.alpha_hi
                && self.psi_bar[i] >= cfg.psi_floor
                && self.alpha_hat_bar[i] >= 1.0 / (1.0 - a) - 1e-9
                && self.p_e_bar[i] >= 0.0;
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "expansion point invalid at node {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-node frame data in internal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeData {
    pub coupling: PowerCoupling,
    /// SNR per internal power unit.
    pub gain: f64,
    /// Bandwidth in MHz, so that `w log2(1 + gain p)` is in Mbit/s.
    pub w: f64,
    /// `q + a τ` (Mbit).
    pub backlog: f64,
    pub p_min: f64,
    pub p_bar: f64,
    pub psi_floor: f64,
}

impl NodeData {
    pub fn new(cfg: &SystemConfig, frame: &FrameState, i: usize, use_battery: bool) -> Self {
        let s = UnitScales::for_config(cfg);
        let battery = if use_battery { frame.battery[i] } else { 0.0 };
        let coupling = PowerCoupling {
            e_over_tau: s.energy_to_internal(battery) / cfg.tau,
            // η ‖g‖² · P_max in internal power units per unit of α · p̃_e
            a: s.power_to_internal(cfg.eta * frame.g_norm2[i] * s.beacon_power_scale),
        };
        Self {
            coupling,
            gain: frame.h_norm2[i] / cfg.sigma2 * s.power_scale,
            w: s.rate_to_internal(cfg.w_k),
            backlog: s.queue_to_internal(frame.queue[i] + frame.arrivals[i] * cfg.tau),
            p_min: s.power_to_internal(min_power(cfg.gamma_min, cfg.sigma2, frame.h_norm2[i])),
            p_bar: s.power_to_internal(cfg.p_bar),
            psi_floor: s.queue_to_internal(cfg.psi_floor),
        }
    }

    pub fn all(cfg: &SystemConfig, frame: &FrameState, use_battery: bool) -> Vec<Self> {
        (0..cfg.num_nodes)
            .map(|i| Self::new(cfg, frame, i, use_battery))
            .collect()
    }

    /// Mbit/s at internal power `p`.
    pub fn rate(&self, p: f64) -> f64 {
        self.w * (self.gain * p).ln_1p() / std::f64::consts::LN_2
    }
}

/// Expansion point in internal units for node `i`.
struct Anchor {
    alpha: f64,
    p_e: f64,
    psi: f64,
    alpha_hat: f64,
}

fn anchor(cfg: &SystemConfig, point: &ExpansionPoint, i: usize) -> Anchor {
    let s = UnitScales::for_config(cfg);
    Anchor {
        alpha: point.alpha_bar[i],
        p_e: s.beacon_to_internal(point.p_e_bar[i]),
        psi: s.queue_to_internal(point.psi_bar[i]),
        alpha_hat: point.alpha_hat_bar[i],
    }
}

/// Convexified energy coupling of node `i` as `expr <= 0`.
pub fn build_power_coupling_constraint(
    node: &NodeData,
    layout: VarLayout,
    i: usize,
    point: &ExpansionPoint,
    cfg: &SystemConfig,
) -> Constraint {
    let an = anchor(cfg, point, i);
    let (pe, pi, al) = (layout.p_e(i), layout.p_i(i), layout.alpha(i));
    let c = node.coupling;
    let y_bar = 1.0 - an.alpha;
    let r = (an.alpha + an.p_e) / y_bar;
    // lhs: p_i + A (α − p_e)² / (4 (1 − α))
    // rhs: (E/τ)(2/ȳ − (1−α)/ȳ²) + (A/4)(2 r (α + p_e) − r² (1 − α))
    let e_inv = c.e_over_tau / (y_bar * y_bar);
    let quarter_a = 0.25 * c.a;
    let expr = Expr::constant(-2.0 * c.e_over_tau / y_bar + e_inv + quarter_a * r * r)
        .linear(pi, 1.0)
        .plus(Atom::QuadOverLin {
            num: vec![(al, 1.0), (pe, -1.0)],
            num_const: 0.0,
            den_var: al,
            den_coef: -1.0,
            den_const: 1.0,
            coef: quarter_a,
        })
        .linear(al, -e_inv - quarter_a * 2.0 * r - quarter_a * r * r)
        .linear(pe, -quarter_a * 2.0 * r);
    Constraint {
        name: format!("coupling[{i}]"),
        class: ConstraintClass::QuadOverLin,
        expr,
    }
}

/// Convexified service constraint `ψ α̂ <= τ r(p_i)` of node `i`, together
/// with the linear backlog deficit `q + a τ − λ − ψ <= 0`.
pub fn build_rate_constraint(
    node: &NodeData,
    layout: VarLayout,
    i: usize,
    point: &ExpansionPoint,
    cfg: &SystemConfig,
) -> [Constraint; 2] {
    let an = anchor(cfg, point, i);
    let rate = Expr::new()
        .square(layout.alpha_hat(i), 0.5 * an.psi / an.alpha_hat)
        .square(layout.psi(i), 0.5 * an.alpha_hat / an.psi)
        .log2_rate(layout.p_i(i), node.gain, -cfg.tau * node.w);
    let deficit = Expr::constant(node.backlog)
        .linear(layout.lambda(i), -1.0)
        .linear(layout.psi(i), -1.0);
    [
        Constraint {
            name: format!("rate[{i}]"),
            class: ConstraintClass::NegLogRate,
            expr: rate,
        },
        Constraint {
            name: format!("backlog[{i}]"),
            class: ConstraintClass::Affine,
            expr: deficit,
        },
    ]
}

/// `1/(1 − α) − α̂ <= 0` for node `i`.
pub fn build_time_slack_constraint(layout: VarLayout, i: usize) -> Constraint {
    Constraint {
        name: format!("time[{i}]"),
        class: ConstraintClass::Reciprocal,
        expr: Expr::new()
            .plus(Atom::Reciprocal {
                var: layout.alpha(i),
                den_coef: -1.0,
                den_const: 1.0,
                coef: 1.0,
            })
            .linear(layout.alpha_hat(i), -1.0),
    }
}

/// Subproblem at `point`. The objective is the internal-unit drift-plus-penalty
/// value `β Σ r_k − ½ Σ λ_k² / τ² + L`, i.e. the SI value divided by
/// [`UnitScales::objective_scale`]. With `use_battery = false` the battery is
/// left out of the energy coupling.
pub fn build_subproblem_with(
    frame: &FrameState,
    point: &ExpansionPoint,
    beta: f64,
    cfg: &SystemConfig,
    use_battery: bool,
) -> ConvexProblem {
    let k = cfg.num_nodes;
    let layout = VarLayout::new(k);
    let s = UnitScales::for_config(cfg);
    let nodes = NodeData::all(cfg, frame, use_battery);
    let beta_int = beta * s.rate_scale / s.objective_scale();
    let tau2 = cfg.tau * cfg.tau;
    let l_t: f64 = frame
        .queue
        .iter()
        .map(|q| {
            let q = s.queue_to_internal(*q);
            0.5 * q * q / tau2
        })
        .sum();

    let mut objective = Expr::constant(l_t);
    for (i, node) in nodes.iter().enumerate() {
        objective = objective
            .log2_rate(layout.p_i(i), node.gain, beta_int * node.w)
            .square(layout.lambda(i), -0.5 / tau2);
    }
    let mut p = ConvexProblem::new(layout.n(), objective);
    let mut budget = Expr::constant(-1.0);
    for i in 0..k {
        budget = budget.linear(layout.p_e(i), 1.0);
    }
    p.constrain("budget", ConstraintClass::Affine, budget);
    for (i, node) in nodes.iter().enumerate() {
        p.bound(layout.p_e(i), 0.0, f64::INFINITY);
        p.bound(layout.p_i(i), node.p_min, node.p_bar);
        p.bound(layout.alpha(i), cfg.alpha_lo, cfg.alpha_hi);
        p.bound(layout.lambda(i), 0.0, f64::INFINITY);
        p.bound(layout.psi(i), node.psi_floor, f64::INFINITY);
        p.constraints
            .push(build_power_coupling_constraint(node, layout, i, point, cfg));
        p.constraints
            .extend(build_rate_constraint(node, layout, i, point, cfg));
        p.constraints.push(build_time_slack_constraint(layout, i));
    }
    p
}

pub fn build_subproblem(
    frame: &FrameState,
    point: &ExpansionPoint,
    beta: f64,
    cfg: &SystemConfig,
) -> ConvexProblem {
    build_subproblem_with(frame, point, beta, cfg, true)
}

/// Applies a benchmark policy to a subproblem. `pinned_p_i` (internal
/// units) is required for [`Scheme::MaxPower`], whose transmit powers are
/// set by the caller each iteration.
pub fn scheme_restrict(
    scheme: Scheme,
    mut problem: ConvexProblem,
    pinned_p_i: Option<&[f64]>,
) -> Result<ConvexProblem> {
    let k = problem.n / 6;
    let layout = VarLayout::new(k);
    match scheme {
        Scheme::Proposed => {}
        Scheme::EqualPower => {
            for i in 0..k {
                problem.fix(layout.p_e(i), 1.0 / k as f64);
            }
        }
        Scheme::EqualTime => {
            for i in 0..k {
                problem.fix(layout.alpha(i), 0.5);
                problem.fix(layout.alpha_hat(i), 2.0);
            }
        }
        Scheme::MaxPower => {
            let pins = pinned_p_i.ok_or_else(|| {
                Error::InvalidConfig("max-power needs pinned transmit powers".into())
            })?;
            if pins.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    got: pins.len(),
                });
            }
            for (i, v) in pins.iter().enumerate() {
                problem.fix(layout.p_i(i), *v);
            }
        }
    }
    Ok(problem)
}

/// Size of a subproblem: variables, linear constraint families (affine
/// constraints plus bounded variables) and nonlinear constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubproblemShape {
    pub variables: usize,
    pub linear_families: usize,
    pub nonlinear: usize,
}

impl SubproblemShape {
    pub fn of(p: &ConvexProblem) -> Self {
        let affine = p
            .constraints
            .iter()
            .filter(|c| c.class == ConstraintClass::Affine)
            .count();
        let bounded = (0..p.n)
            .filter(|&i| p.lower[i].is_finite() || p.upper[i].is_finite())
            .count();
        Self {
            variables: p.n,
            linear_families: affine + bounded,
            nonlinear: p.constraints.len() - affine,
        }
    }
}
