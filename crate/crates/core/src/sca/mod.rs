//! Successive convex approximation of the per-frame allocation problem.
//!
//! Every iteration replaces the non-convex energy coupling, the bilinear
//! service term and the time-share reciprocal by convex surrogates that are
//! tight at the current expansion point, solves the resulting program with
//! [`crate::solver`], and moves the expansion point to the optimizer. Since
//! the previous optimizer stays strictly feasible for the next surrogate
//! and the solver never returns a worse point than its start, the objective
//! trace is non-decreasing.

mod subproblem;
mod surrogate;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use subproblem::{
    build_power_coupling_constraint, build_rate_constraint, build_subproblem,
    build_subproblem_with, build_time_slack_constraint, scheme_restrict, ExpansionPoint,
    NodeData, Scheme, SubproblemShape, VarLayout,
};
pub use surrogate::{
    bilinear_upper, soc_parity, taylor_inv_lower, taylor_quad_over_lin_lower, time_slack,
    time_slack_soc, PowerCoupling,
};

use crate::error::{Error, Result};
use crate::model::{Allocation, FrameState, SlackState, SystemConfig, UnitScales};
use crate::phy::{harvested_energy, RateFn};
use crate::queues::{lyapunov, update_data_queue};
use crate::solver::{solve, ConvexProblem, SolverOptions, SolverReport, SolverStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaResult {
    pub scheme: Scheme,
    /// Final allocation (SI) after the transmit-power clip.
    pub allocation: Allocation,
    /// Slack variables at the last subproblem optimum (SI).
    pub slack: SlackState,
    /// Drift-plus-penalty value (SI, `L` included) at the start point and
    /// after every iteration.
    pub objective_trace: Vec<f64>,
    /// Largest violation of the exact constraints after every iteration
    /// (internal units; 0 when the surrogates are inner approximations).
    pub violations: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reports: Vec<SolverReport>,
    /// Set when no feasible start exists and the fallback rule was used.
    pub fallback: bool,
}

impl ScaResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }

    pub fn trace_rows(&self, frame: usize) -> Vec<ScaTraceRow> {
        self.objective_trace
            .iter()
            .enumerate()
            .map(|(kappa, &objective)| ScaTraceRow {
                frame,
                kappa,
                objective,
                max_constraint_violation: if kappa == 0 {
                    0.0
                } else {
                    self.violations[kappa - 1]
                },
                solver_status: if kappa == 0 {
                    if self.fallback { "fallback" } else { "initial" }.to_string()
                } else {
                    self.reports[kappa - 1].status.to_string()
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaTraceRow {
    pub frame: usize,
    pub kappa: usize,
    pub objective: f64,
    pub max_constraint_violation: f64,
    pub solver_status: String,
}

pub fn write_sca_trace_csv<W: Write>(rows: &[ScaTraceRow], mut w: W) -> Result<()> {
    writeln!(w, "frame,kappa,objective,max_constraint_violation,solver_status")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.frame, r.kappa, r.objective, r.max_constraint_violation, r.solver_status
        )?;
    }
    Ok(())
}

fn check_frame(frame: &FrameState, cfg: &SystemConfig) -> Result<()> {
    frame.validate(cfg)
}

/// Strictly feasible start for `scheme` and the expansion point at that start.
///
/// The time split starts at one half, the beacon budget is shared evenly
/// (shrunk by `strict_margin` unless it is fixed by the scheme) and each
/// transmit power sits just inside the energy cap. `ψ` starts at a quarter
/// of the frame's service at that power, and `λ` just covers the remaining
/// backlog. Fails with [`Error::InfeasibleFrame`] when the cap does not
/// clear the minimum-SNR power.
pub fn initial_point(
    frame: &FrameState,
    cfg: &SystemConfig,
    scheme: Scheme,
) -> Result<(Allocation, SlackState, ExpansionPoint)> {
    check_frame(frame, cfg)?;
    let k = cfg.num_nodes;
    let s = UnitScales::for_config(cfg);
    let m = cfg.strict_margin;
    let nodes = NodeData::all(cfg, frame, scheme.uses_battery());
    let share = if scheme == Scheme::EqualPower {
        1.0 / k as f64
    } else {
        (1.0 - m) / k as f64
    };
    let alpha_hat = if scheme == Scheme::EqualTime {
        2.0
    } else {
        2.0 + m
    };
    let mut alloc = Allocation {
        p_e: vec![s.beacon_to_si(share); k],
        p_i: Vec::with_capacity(k),
        alpha: vec![0.5; k],
    };
    let mut slack = SlackState {
        lambda: Vec::with_capacity(k),
        psi: Vec::with_capacity(k),
        alpha_hat: vec![alpha_hat; k],
    };
    for (i, node) in nodes.iter().enumerate() {
        let cap = node.coupling.power_cap(0.5, share).min(node.p_bar);
        let p_i = (1.0 - m) * cap;
        if !(p_i > node.p_min * (1.0 + m)) {
            return Err(Error::InfeasibleFrame {
                node: i,
                p_min: s.power_to_si(node.p_min),
                cap: s.power_to_si(cap),
            });
        }
        let psi = 0.5 * cfg.tau * node.rate(p_i) / alpha_hat;
        if !(psi > node.psi_floor * (1.0 + m)) {
            return Err(Error::InfeasibleFrame {
                node: i,
                p_min: s.power_to_si(node.p_min),
                cap: s.power_to_si(cap),
            });
        }
        let lambda = (node.backlog - 0.5 * psi).max(0.5 * psi);
        alloc.p_i.push(s.power_to_si(p_i));
        slack.psi.push(s.queue_to_si(psi));
        slack.lambda.push(s.queue_to_si(lambda));
    }
    let point = ExpansionPoint {
        alpha_bar: alloc.alpha.clone(),
        p_e_bar: alloc.p_e.clone(),
        psi_bar: slack.psi.clone(),
        alpha_hat_bar: slack.alpha_hat.clone(),
    };
    Ok((alloc, slack, point))
}

fn pack(layout: VarLayout, alloc: &Allocation, slack: &SlackState, s: &UnitScales) -> Vec<f64> {
    let mut x = vec![0.0; layout.n()];
    for i in 0..layout.k {
        x[layout.p_e(i)] = s.beacon_to_internal(alloc.p_e[i]);
        x[layout.p_i(i)] = s.power_to_internal(alloc.p_i[i]);
        x[layout.alpha(i)] = alloc.alpha[i];
        x[layout.lambda(i)] = s.queue_to_internal(slack.lambda[i]);
        x[layout.psi(i)] = s.queue_to_internal(slack.psi[i]);
        x[layout.alpha_hat(i)] = slack.alpha_hat[i];
    }
    x
}

fn unpack(layout: VarLayout, x: &[f64], s: &UnitScales) -> (Allocation, SlackState) {
    let k = layout.k;
    let col = |f: &dyn Fn(usize) -> usize, conv: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..k).map(|i| conv(x[f(i)])).collect()
    };
    (
        Allocation {
            p_e: col(&|i| layout.p_e(i), &|v| s.beacon_to_si(v)),
            p_i: col(&|i| layout.p_i(i), &|v| s.power_to_si(v)),
            alpha: col(&|i| layout.alpha(i), &|v| v),
        },
        SlackState {
            lambda: col(&|i| layout.lambda(i), &|v| s.queue_to_si(v)),
            psi: col(&|i| layout.psi(i), &|v| s.queue_to_si(v)),
            alpha_hat: col(&|i| layout.alpha_hat(i), &|v| v),
        },
    )
}

/// Largest violation of the exact (unconvexified) constraints at `x`.
fn exact_violation(layout: VarLayout, nodes: &[NodeData], x: &[f64], tau: f64) -> f64 {
    let mut worst: f64 = (0..layout.k).map(|i| x[layout.p_e(i)]).sum::<f64>() - 1.0;
    for (i, n) in nodes.iter().enumerate() {
        let alpha = x[layout.alpha(i)];
        let p_i = x[layout.p_i(i)];
        worst = worst.max(p_i - n.coupling.power_cap(alpha, x[layout.p_e(i)]));
        let served = n.rate(p_i) * (1.0 - alpha) * tau;
        worst = worst.max(n.backlog - x[layout.lambda(i)] - served);
    }
    worst.max(0.0)
}

/// Transmit power the clip assigns: all available energy over the transmit
/// phase, capped at `P̄`.
fn clipped_power(cfg: &SystemConfig, frame: &FrameState, i: usize, alloc: &Allocation, use_battery: bool) -> f64 {
    let e = harvested_energy(cfg.eta, cfg.tau, alloc.alpha[i], alloc.p_e[i], frame.g_norm2[i])
        .unwrap_or(0.0);
    let available = if use_battery { frame.battery[i] + e } else { e };
    (available / ((1.0 - alloc.alpha[i]) * cfg.tau)).min(cfg.p_bar)
}

/// Harvest-only power for the max-power rule at `(α, p̃_e)`, shrunk to stay
/// strictly inside the coupling surrogate built at the same point.
fn max_power_pin(cfg: &SystemConfig, node: &NodeData, alpha: f64, p_e: f64) -> f64 {
    (1.0 - cfg.strict_margin) * node.coupling.power_cap(alpha, p_e).min(node.p_bar)
}

/// Normalizer for a subproblem objective: its magnitude at the warm start,
/// but never below the largest attainable penalty term. Without the floor,
/// frames whose queues can be emptied would be solved to a tolerance larger
/// than their whole objective range.
fn objective_norm(problem: &ConvexProblem, x: &[f64], nodes: &[NodeData], beta_int: f64) -> f64 {
    let penalty: f64 = nodes
        .iter()
        .map(|n| beta_int * n.w * (n.gain * n.p_bar).ln_1p() / std::f64::consts::LN_2)
        .sum();
    problem.objective.value(x).abs().max(penalty).max(f64::MIN_POSITIVE)
}

/// Runs the SCA loop for one frame.
pub fn solve_frame(
    frame: &FrameState,
    beta: f64,
    cfg: &SystemConfig,
    scheme: Scheme,
) -> Result<ScaResult> {
    let (alloc0, slack0, mut point) = initial_point(frame, cfg, scheme)?;
    let k = cfg.num_nodes;
    let layout = VarLayout::new(k);
    let s = UnitScales::for_config(cfg);
    let use_battery = scheme.uses_battery();
    let nodes = NodeData::all(cfg, frame, use_battery);
    let opts = SolverOptions::from_config(cfg);
    let mut x = pack(layout, &alloc0, &slack0, &s);
    let mut pins: Option<Vec<f64>> =
        (scheme == Scheme::MaxPower).then(|| (0..k).map(|i| x[layout.p_i(i)]).collect());

    let mut trace = Vec::new();
    let mut violations = Vec::new();
    let mut reports = Vec::new();
    let mut converged = false;
    {
        let p0 = build_subproblem_with(frame, &point, beta, cfg, use_battery);
        trace.push(p0.objective.value(&x) * s.objective_scale());
    }
    for kappa in 1..=cfg.max_sca_iter {
        let base = build_subproblem_with(frame, &point, beta, cfg, use_battery);
        let mut problem = scheme_restrict(scheme, base, pins.as_deref())?;
        let norm = objective_norm(&problem, &x, &nodes, beta * s.rate_scale / s.objective_scale());
        problem.objective = problem.objective.scaled(1.0 / norm);
        let sol = solve(&problem, &x, &opts).map_err(|e| Error::Sca {
            iteration: kappa,
            message: e.to_string(),
        })?;
        x = sol.x;
        let status = sol.report.status;
        let f = sol.report.objective * norm * s.objective_scale();
        let prev = *trace.last().expect("trace starts with the initial point");
        trace.push(f);
        violations.push(exact_violation(layout, &nodes, &x, cfg.tau));
        reports.push(sol.report);

        let (alloc, slack) = unpack(layout, &x, &s);
        point = ExpansionPoint {
            alpha_bar: alloc.alpha,
            p_e_bar: alloc.p_e,
            psi_bar: slack.psi,
            alpha_hat_bar: slack.alpha_hat,
        };
        if let Some(pins) = pins.as_mut() {
            for (i, pin) in pins.iter_mut().enumerate() {
                let fresh = max_power_pin(cfg, &nodes[i], x[layout.alpha(i)], x[layout.p_e(i)]);
                *pin = pin.max(fresh);
            }
        }
        if status == SolverStatus::NumericalFailure {
            log::debug!("frame {}: solver failure at sca iteration {kappa}", frame.t);
            break;
        }
        if (f - prev).abs() <= cfg.sca_tol * f.abs() {
            converged = true;
            break;
        }
    }

    let (mut allocation, slack) = unpack(layout, &x, &s);
    for i in 0..k {
        allocation.p_i[i] = clipped_power(cfg, frame, i, &allocation, use_battery);
    }
    Ok(ScaResult {
        scheme,
        allocation,
        slack,
        iterations: reports.len(),
        objective_trace: trace,
        violations,
        converged,
        reports,
        fallback: false,
    })
}

/// Allocation used when a frame admits no feasible start: the previous
/// time split (or one half), an even beacon split and all available energy
/// spent on transmission. `λ` is set to the resulting next backlog.
pub fn fallback_allocation(
    frame: &FrameState,
    beta: f64,
    cfg: &SystemConfig,
    scheme: Scheme,
    prev_alpha: Option<&[f64]>,
) -> Result<ScaResult> {
    check_frame(frame, cfg)?;
    let k = cfg.num_nodes;
    let alpha: Vec<f64> = match (scheme, prev_alpha) {
        (Scheme::EqualTime, _) | (_, None) => vec![0.5; k],
        (_, Some(a)) => a.to_vec(),
    };
    let mut allocation = Allocation {
        p_e: vec![cfg.p_max / k as f64; k],
        p_i: vec![0.0; k],
        alpha,
    };
    for i in 0..k {
        allocation.p_i[i] = clipped_power(cfg, frame, i, &allocation, scheme.uses_battery());
    }
    let mut slack = SlackState {
        lambda: Vec::with_capacity(k),
        psi: Vec::with_capacity(k),
        alpha_hat: allocation.alpha.iter().map(|a| 1.0 / (1.0 - a)).collect(),
    };
    let mut penalty = 0.0;
    for i in 0..k {
        let r = RateFn::new(cfg.w_k, frame.h_norm2[i], cfg.sigma2)?.rate(allocation.p_i[i]);
        penalty += beta * r;
        let q_next = update_data_queue(
            frame.queue[i],
            frame.arrivals[i],
            cfg.tau,
            r,
            allocation.alpha[i],
        );
        slack.lambda.push(q_next);
        slack.psi.push((frame.queue[i] + frame.arrivals[i] * cfg.tau - q_next).max(cfg.psi_floor));
    }
    let objective =
        penalty - lyapunov(&slack.lambda, cfg.tau) + lyapunov(&frame.queue, cfg.tau);
    Ok(ScaResult {
        scheme,
        allocation,
        slack,
        objective_trace: vec![objective],
        violations: Vec::new(),
        iterations: 0,
        converged: false,
        reports: Vec::new(),
        fallback: true,
    })
}

/// [`solve_frame`], falling back to [`fallback_allocation`] on an
/// infeasible frame.
pub fn solve_frame_or_fallback(
    frame: &FrameState,
    beta: f64,
    cfg: &SystemConfig,
    scheme: Scheme,
    prev_alpha: Option<&[f64]>,
) -> Result<ScaResult> {
    match solve_frame(frame, beta, cfg, scheme) {
        Err(Error::InfeasibleFrame { node, p_min, cap }) => {
            log::warn!(
                "frame {}: node {node} cannot reach p_min {p_min:e} W (cap {cap:e} W), using fallback",
                frame.t
            );
            fallback_allocation(frame, beta, cfg, scheme, prev_alpha)
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queues::update_energy_queue;
    use crate::stochastic::{draw_arrivals, place_nodes, sample_channels, RngStream, TOPOLOGY_TAG};
    use approx::assert_relative_eq;

    fn cfg() -> SystemConfig {
        SystemConfig::paper_defaults().validate().unwrap()
    }

    fn random_frame(cfg: &SystemConfig, seed: u64, queue: f64, battery: f64) -> FrameState {
        let root = RngStream::new(seed, 0);
        let topo = place_nodes(cfg, &mut root.child(TOPOLOGY_TAG));
        let mut rng = root.frame(0);
        let (g, h) = sample_channels(cfg, &topo, &mut rng);
        let arrivals = draw_arrivals(cfg, &mut rng);
        FrameState {
            t: 0,
            g_norm2: g,
            h_norm2: h,
            arrivals,
            queue: vec![queue; cfg.num_nodes],
            battery: vec![battery; cfg.num_nodes],
        }
    }

    #[test]
    fn initial_point_is_strictly_feasible() {
        let c = cfg();
        for scheme in Scheme::ALL {
            for seed in 0..5 {
                let f = random_frame(&c, seed, 2e5, 1e-9);
                let (alloc, slack, point) = initial_point(&f, &c, scheme).unwrap();
                point.validate(&c).unwrap();
                let layout = VarLayout::new(c.num_nodes);
                let s = c.unit_scales();
                let x = pack(layout, &alloc, &slack, &s);
                let base = build_subproblem_with(&f, &point, c.beta, &c, scheme.uses_battery());
                let pins: Vec<f64> = (0..4).map(|i| x[layout.p_i(i)]).collect();
                let p = scheme_restrict(scheme, base, Some(&pins)).unwrap();
                for con in &p.constraints {
                    let v = con.expr.value(&x);
                    let only_fixed = con.expr.vars().iter().all(|&i| p.fixed[i].is_some());
                    assert!(v < 0.0 || (only_fixed && v <= 1e-12), "{} = {v}", con.name);
                }
            }
        }
    }

    #[test]
    fn initial_power_hits_the_cap_branch_with_a_full_battery() {
        let c = cfg();
        let f = random_frame(&c, 3, 0.0, 1.0);
        let (alloc, _, _) = initial_point(&f, &c, Scheme::Proposed).unwrap();
        for p in alloc.p_i {
            assert_relative_eq!(p, c.p_bar * (1.0 - c.strict_margin), max_relative = 1e-12);
        }
    }

    #[test]
    fn initial_point_with_empty_queues() {
        let c = SystemConfig {
            a_lo: 0.0,
            a_hi: 0.0,
            ..cfg()
        };
        let f = random_frame(&c, 1, 0.0, 0.0);
        let (_, slack, _) = initial_point(&f, &c, Scheme::Proposed).unwrap();
        for (l, p) in slack.lambda.iter().zip(&slack.psi) {
            // λ sits at half the starting ψ, the closest strictly positive choice
            assert_relative_eq!(*l, 0.5 * p, max_relative = 1e-12);
        }
    }

    #[test]
    fn empty_battery_energy_limited_start() {
        // mean gains at 100 m from both ends: p_i⁰ is energy limited and far above p_min
        let c = cfg();
        let g = 16.0 * 100f64.powi(-3);
        let f = FrameState {
            t: 0,
            g_norm2: vec![g; 4],
            h_norm2: vec![g; 4],
            arrivals: vec![50e6; 4],
            queue: vec![0.0; 4],
            battery: vec![0.0; 4],
        };
        let (alloc, _, _) = initial_point(&f, &c, Scheme::Proposed).unwrap();
        let p_min = c.gamma_min * c.sigma2 / g;
        let expected = (1.0 - c.strict_margin)
            * c.eta
            * 0.5
            * (1.0 - c.strict_margin)
            * c.p_max
            / 4.0
            * g
            / 0.5;
        assert_relative_eq!(alloc.p_i[0], expected, max_relative = 1e-12);
        assert!(alloc.p_i[0] > 1e3 * p_min);
    }

    #[test]
    fn trace_is_monotone_and_allocation_is_consistent() {
        let c = cfg();
        for scheme in Scheme::ALL {
            for seed in 0..4 {
                let f = random_frame(&c, seed, 1e5 * seed as f64, 2e-9);
                let r = solve_frame(&f, c.beta, &c, scheme).unwrap();
                for w in r.objective_trace.windows(2) {
                    assert!(w[1] >= w[0], "{scheme}: {:?}", r.objective_trace);
                }
                assert!(r.iterations <= c.max_sca_iter);
                assert!(r.violations.iter().all(|v| *v <= 1e-9));
                let budget: f64 = r.allocation.p_e.iter().sum();
                assert!(budget <= c.p_max * (1.0 + 1e-12));
                for i in 0..4 {
                    let a = &r.allocation;
                    assert!(a.alpha[i] >= c.alpha_lo && a.alpha[i] <= c.alpha_hi);
                    assert!(a.p_i[i] <= c.p_bar);
                    let e = harvested_energy(c.eta, c.tau, a.alpha[i], a.p_e[i], f.g_norm2[i])
                        .unwrap();
                    let battery = if scheme.uses_battery() { f.battery[i] } else { 0.0 };
                    update_energy_queue(battery, e, a.p_i[i], a.alpha[i], c.tau, c.e_max)
                        .unwrap();
                }
                if scheme == Scheme::EqualPower {
                    assert!(r.allocation.p_e.iter().all(|p| *p == c.p_max / 4.0));
                }
                if scheme == Scheme::EqualTime {
                    assert!(r.allocation.alpha.iter().all(|a| *a == 0.5));
                }
            }
        }
    }

    #[test]
    fn solve_frame_is_deterministic() {
        let c = cfg();
        let f = random_frame(&c, 8, 3e5, 0.0);
        let a = solve_frame(&f, c.beta, &c, Scheme::Proposed).unwrap();
        let b = solve_frame(&f, c.beta, &c, Scheme::Proposed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fallback_spends_available_energy() {
        let c = cfg();
        let f = random_frame(&c, 2, 1e5, 1e-9);
        let r = fallback_allocation(&f, c.beta, &c, Scheme::Proposed, Some(&[0.3; 4])).unwrap();
        assert!(r.fallback);
        for i in 0..4 {
            let a = &r.allocation;
            assert_eq!(a.alpha[i], 0.3);
            let e = harvested_energy(c.eta, c.tau, 0.3, a.p_e[i], f.g_norm2[i]).unwrap();
            let next = update_energy_queue(f.battery[i], e, a.p_i[i], 0.3, c.tau, c.e_max).unwrap();
            assert!(next.abs() <= 1e-12 * (f.battery[i] + e));
        }
    }

    #[test]
    fn trace_csv_layout() {
        let c = cfg();
        let f = random_frame(&c, 4, 1e5, 0.0);
        let r = solve_frame(&f, c.beta, &c, Scheme::Proposed).unwrap();
        let rows = r.trace_rows(7);
        let mut buf = Vec::new();
        write_sca_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("frame,kappa,objective,max_constraint_violation,solver_status")
        );
        assert!(lines.next().unwrap().starts_with("7,0,"));
        assert_eq!(text.lines().count(), r.iterations + 2);
    }
}
