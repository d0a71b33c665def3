//! Log-barrier interior-point method for small smooth convex programs
//!
//! ```text
//! maximize f(x)  subject to  c_j(x) <= 0,  lower <= x <= upper,  x_i = v_i (fixed)
//! ```
//!
//! with `f` concave and every `c_j` convex. The start point must be strictly
//! feasible; every iterate stays strictly feasible.
//!
//! Each centering step minimizes `-t f(x) - Σ log(-c_j(x)) - Σ log(box slack)`
//! by damped Newton. The Newton system is diagonally equilibrated and
//! factored with Cholesky, adding a ridge when the factorization fails.
//! Line-search decisions use [`Expr::delta`] so that small changes of a large
//! objective are not lost to cancellation.

mod expr;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use expr::{Atom, Expr};

use crate::error::{Error, Result};
use crate::model::SystemConfig;

/// Curvature class of a constraint, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintClass {
    Affine,
    ConvexQuadratic,
    QuadOverLin,
    Reciprocal,
    NegLogRate,
}

/// `expr(x) <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub class: ConstraintClass,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexProblem {
    pub n: usize,
    /// Concave objective to maximize.
    pub objective: Expr,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fixed: Vec<Option<f64>>,
}

impl ConvexProblem {
    pub fn new(n: usize, objective: Expr) -> Self {
        Self {
            n,
            objective,
            constraints: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            fixed: vec![None; n],
        }
    }

    pub fn constrain(&mut self, name: impl Into<String>, class: ConstraintClass, expr: Expr) {
        self.constraints.push(Constraint {
            name: name.into(),
            class,
            expr,
        });
    }

    pub fn bound(&mut self, i: usize, lower: f64, upper: f64) {
        self.lower[i] = lower;
        self.upper[i] = upper;
    }

    pub fn fix(&mut self, i: usize, value: f64) {
        self.fixed[i] = Some(value);
    }

    /// Largest violation over constraints, bounds and fixings (0 if feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let v = c.expr.value(x);
            worst = worst.max(if v.is_nan() { f64::INFINITY } else { v });
        }
        for (i, &xi) in x.iter().enumerate().take(self.n) {
            worst = worst.max(self.lower[i] - xi).max(xi - self.upper[i]);
            if let Some(v) = self.fixed[i] {
                worst = worst.max((xi - v).abs());
            }
        }
        worst
    }

    fn check_dims(&self, x0: &[f64]) -> Result<()> {
        for len in [x0.len(), self.lower.len(), self.upper.len(), self.fixed.len()] {
            if len != self.n {
                return Err(Error::Dimension {
                    expected: self.n,
                    got: len,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Tolerance for constraints that only involve fixed variables.
    pub feas_tol: f64,
    /// Stop once `m / t <= gap_tol · max(1, |f|)`.
    pub gap_tol: f64,
    /// Stop once the normalized KKT residual is below this.
    pub kkt_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub mu_factor: f64,
    /// Initial duality measure as a fraction of `max(1, |f(x0)|)`.
    pub initial_gap_fraction: f64,
    pub centering_tol: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub ridge: f64,
    pub record_trajectory: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            gap_tol: 1e-7,
            kkt_tol: 1e-6,
            max_outer: 50,
            max_inner: 100,
            mu_factor: 10.0,
            initial_gap_fraction: 1e-1,
            centering_tol: 1e-10,
            armijo: 0.3,
            backtrack: 0.8,
            ridge: 1e-10,
            record_trajectory: false,
        }
    }
}

impl SolverOptions {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            feas_tol: cfg.feas_tol,
            gap_tol: cfg.gap_tol,
            kkt_tol: cfg.kkt_tol,
            max_outer: cfg.max_outer_iter,
            max_inner: cfg.max_inner_iter,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    NumericalFailure,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIter => "max_iter",
            SolverStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dual estimates `u = 1 / (t · slack)` at the returned point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub constraints: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub outer: usize,
    pub inner: usize,
    pub t: f64,
    pub objective: f64,
    pub decrement2: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolverStatus,
    /// Newton steps taken.
    pub iterations: usize,
    pub outer_iterations: usize,
    /// `m / t` at the last centering.
    pub duality_measure: f64,
    pub objective: f64,
    /// Normalized KKT residual, see [`kkt_residual`].
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub multipliers: Multipliers,
    /// Objective after each completed centering.
    pub outer_objectives: Vec<f64>,
    pub trajectory: Vec<IterateRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub report: SolverReport,
}

/// Normalized KKT residual of `(x, u)`:
/// stationarity `‖∇f − Σ u_j ∇c_j + u_lo − u_hi‖∞ / (1 + ‖∇f‖∞)` over free
/// variables, plus complementarity `Σ u · slack / (1 + |f|)`, plus primal
/// and dual infeasibility.
pub fn kkt_residual(problem: &ConvexProblem, x: &[f64], u: &Multipliers) -> f64 {
    let n = problem.n;
    let gf = problem.objective.gradient(x);
    let mut station = gf.clone();
    let mut comp = 0.0;
    let mut infeas: f64 = 0.0;
    for (c, &uj) in problem.constraints.iter().zip(&u.constraints) {
        let v = c.expr.value(x);
        c.expr.add_gradient(x, -uj, &mut station);
        comp += (uj * v).abs();
        infeas = infeas.max(v).max(-uj);
    }
    for i in 0..n {
        let lo = u.lower.get(i).copied().unwrap_or(0.0);
        let hi = u.upper.get(i).copied().unwrap_or(0.0);
        station[i] += lo - hi;
        if problem.lower[i].is_finite() {
            comp += (lo * (x[i] - problem.lower[i])).abs();
        }
        if problem.upper[i].is_finite() {
            comp += (hi * (problem.upper[i] - x[i])).abs();
        }
        infeas = infeas
            .max(problem.lower[i] - x[i])
            .max(x[i] - problem.upper[i])
            .max(-lo)
            .max(-hi);
    }
    let free = (0..n).filter(|&i| problem.fixed[i].is_none());
    let s_inf = free.clone().map(|i| station[i].abs()).fold(0.0, f64::max);
    let g_inf = free.map(|i| gf[i].abs()).fold(0.0, f64::max);
    let f = problem.objective.value(x);
    s_inf / (1.0 + g_inf) + comp / (1.0 + f.abs()) + infeas.max(0.0)
}

/// `outer,inner,t,objective,decrement2,step` CSV.
pub fn write_trajectory_csv<W: Write>(records: &[IterateRecord], mut w: W) -> Result<()> {
    writeln!(w, "outer,inner,t,objective,decrement2,step")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.outer, r.inner, r.t, r.objective, r.decrement2, r.step
        )?;
    }
    Ok(())
}

struct Barrier<'a> {
    p: &'a ConvexProblem,
    free: Vec<usize>,
    /// Constraints that touch at least one free variable.
    active: Vec<usize>,
    vars: Vec<Vec<usize>>,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl<'a> Barrier<'a> {
    fn new(p: &'a ConvexProblem) -> Self {
        let free: Vec<usize> = (0..p.n).filter(|&i| p.fixed[i].is_none()).collect();
        let mut active = Vec::new();
        let mut vars = Vec::new();
        for (j, c) in p.constraints.iter().enumerate() {
            let v = c.expr.vars();
            if v.iter().any(|&i| p.fixed[i].is_none()) {
                active.push(j);
            }
            vars.push(v);
        }
        let lo = free.iter().copied().filter(|&i| p.lower[i].is_finite()).collect();
        let hi = free.iter().copied().filter(|&i| p.upper[i].is_finite()).collect();
        Self {
            p,
            free,
            active,
            vars,
            lo,
            hi,
        }
    }

    fn strictly_inside(&self, x: &[f64]) -> bool {
        self.active.iter().all(|&j| self.p.constraints[j].expr.value(x) < 0.0)
            && self.free.iter().all(|&i| x[i] > self.p.lower[i] && x[i] < self.p.upper[i])
    }

    fn m(&self) -> usize {
        self.active.len() + self.lo.len() + self.hi.len()
    }

    /// Gradient and Hessian of the barrier function restricted to the free
    /// variables.
    fn derivatives(&self, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.p.n;
        let mut g = vec![0.0; n];
        let mut h = DMatrix::zeros(n, n);
        self.p.objective.add_gradient(x, -t, &mut g);
        self.p.objective.add_hessian(x, -t, &mut h);
        let mut gc = vec![0.0; n];
        for &j in &self.active {
            let c = &self.p.constraints[j].expr;
            let s = -c.value(x);
            for &i in &self.vars[j] {
                gc[i] = 0.0;
            }
            c.add_gradient(x, 1.0, &mut gc);
            for &a in &self.vars[j] {
                g[a] += gc[a] / s;
                for &b in &self.vars[j] {
                    h[(a, b)] += gc[a] * gc[b] / (s * s);
                }
            }
            c.add_hessian(x, 1.0 / s, &mut h);
        }
        for &i in &self.lo {
            let s = x[i] - self.p.lower[i];
            g[i] -= 1.0 / s;
            h[(i, i)] += 1.0 / (s * s);
        }
        for &i in &self.hi {
            let s = self.p.upper[i] - x[i];
            g[i] += 1.0 / s;
            h[(i, i)] += 1.0 / (s * s);
        }
        let nf = self.free.len();
        let gv = DVector::from_fn(nf, |a, _| g[self.free[a]]);
        let hv = DMatrix::from_fn(nf, nf, |a, b| h[(self.free[a], self.free[b])]);
        (gv, hv)
    }

    /// Change of the barrier function along `step`, or `None` if the move
    /// leaves the strict interior or the domain.
    fn delta(&self, x: &[f64], step: &[f64], t: f64) -> Option<f64> {
        let df = self.p.objective.delta(x, step);
        if !df.is_finite() {
            return None;
        }
        let mut d = -t * df;
        for &j in &self.active {
            let c = &self.p.constraints[j].expr;
            let s0 = -c.value(x);
            let dc = c.delta(x, step);
            let ratio = -dc / s0;
            if !(ratio > -1.0) || !(s0 - dc > 0.0) {
                return None;
            }
            d -= ratio.ln_1p();
        }
        for &i in &self.lo {
            let ratio = step[i] / (x[i] - self.p.lower[i]);
            if !(ratio > -1.0) {
                return None;
            }
            d -= ratio.ln_1p();
        }
        for &i in &self.hi {
            let ratio = -step[i] / (self.p.upper[i] - x[i]);
            if !(ratio > -1.0) {
                return None;
            }
            d -= ratio.ln_1p();
        }
        Some(d)
    }

    /// Largest step along `d` (indexed by free variable) that keeps 99 % of
    /// the distance to every finite bound.
    fn box_step(&self, x: &[f64], d: &DVector<f64>) -> f64 {
        let mut s: f64 = 1.0;
        for (a, &i) in self.free.iter().enumerate() {
            if d[a] < 0.0 && self.p.lower[i].is_finite() {
                s = s.min(0.99 * (x[i] - self.p.lower[i]) / -d[a]);
            } else if d[a] > 0.0 && self.p.upper[i].is_finite() {
                s = s.min(0.99 * (self.p.upper[i] - x[i]) / d[a]);
            }
        }
        s
    }

    /// Dual estimates `u = (1 + ∇c·d / s) / (t s)` from the last Newton
    /// direction `d`; the correction removes the first-order centering
    /// error of the plain `1 / (t s)`.
    fn multipliers(&self, x: &[f64], t: f64, d: Option<&DVector<f64>>) -> Multipliers {
        let n = self.p.n;
        let mut full = vec![0.0; n];
        if let Some(d) = d {
            for (a, &i) in self.free.iter().enumerate() {
                full[i] = d[a];
            }
        }
        let mut u = Multipliers {
            constraints: vec![0.0; self.p.constraints.len()],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        let corrected = |s: f64, dc: f64| ((1.0 + dc / s) / (t * s)).max(0.0);
        let mut gc = vec![0.0; n];
        for &j in &self.active {
            let c = &self.p.constraints[j].expr;
            for &i in &self.vars[j] {
                gc[i] = 0.0;
            }
            c.add_gradient(x, 1.0, &mut gc);
            let dc: f64 = self.vars[j].iter().map(|&i| gc[i] * full[i]).sum();
            u.constraints[j] = corrected(-c.value(x), dc);
        }
        for &i in &self.lo {
            u.lower[i] = corrected(x[i] - self.p.lower[i], -full[i]);
        }
        for &i in &self.hi {
            u.upper[i] = corrected(self.p.upper[i] - x[i], full[i]);
        }
        u
    }
}

/// Newton direction for `H d = −g`, with symmetric diagonal scaling and an
/// escalating ridge if `H` is not numerically positive definite.
fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>, ridge0: f64) -> Option<DVector<f64>> {
    let n = g.len();
    let scale = DVector::from_fn(n, |i, _| {
        let d = h[(i, i)];
        if d > 0.0 && d.is_finite() {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    });
    let hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * scale[i] * scale[j]);
    let rhs = DVector::from_fn(n, |i, _| -g[i] * scale[i]);
    let mut ridge = 0.0;
    loop {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            let y = chol.solve(&rhs);
            if y.iter().all(|v| v.is_finite()) {
                return Some(y.component_mul(&scale));
            }
        }
        ridge = if ridge == 0.0 { ridge0 } else { ridge * 10.0 };
        if ridge > 1e4 {
            return None;
        }
    }
}

/// Maximizes `problem` from the strictly feasible `x0`.
///
/// Returns [`Error::InfeasibleStart`] if `x0` is not strictly inside every
/// constraint and bound touching a free variable, or if a constraint over
/// fixed variables only is violated by more than `feas_tol`. Iteration
/// limits and numerical trouble are reported through
/// [`SolverReport::status`] together with the best feasible point found.
/// The returned point never has a smaller objective than `x0`.
pub fn solve(problem: &ConvexProblem, x0: &[f64], opts: &SolverOptions) -> Result<Solution> {
    problem.check_dims(x0)?;
    let mut x = x0.to_vec();
    for (i, f) in problem.fixed.iter().enumerate() {
        if let Some(v) = f {
            x[i] = *v;
        }
    }
    let bar = Barrier::new(problem);
    for (j, c) in problem.constraints.iter().enumerate() {
        let v = c.expr.value(&x);
        let ok = if bar.active.contains(&j) {
            v < 0.0
        } else {
            v <= opts.feas_tol
        };
        if !ok {
            return Err(Error::InfeasibleStart {
                name: c.name.clone(),
                value: v,
            });
        }
    }
    for &i in &bar.free {
        if !(x[i] > problem.lower[i] && x[i] < problem.upper[i]) {
            return Err(Error::InfeasibleStart {
                name: format!("bound on x[{i}]"),
                value: x[i],
            });
        }
    }
    let f0 = problem.objective.value(&x);
    if !f0.is_finite() {
        return Err(Error::InfeasibleStart {
            name: "objective domain".into(),
            value: f0,
        });
    }
    let start = x.clone();

    let m = bar.m();
    let mut t = if m == 0 {
        1.0
    } else {
        m as f64 / (opts.initial_gap_fraction * f0.abs().max(1.0))
    };
    let mut report = SolverReport {
        status: SolverStatus::MaxIter,
        iterations: 0,
        outer_iterations: 0,
        duality_measure: if m == 0 { 0.0 } else { m as f64 / t },
        objective: f0,
        kkt_residual: f64::INFINITY,
        max_violation: 0.0,
        multipliers: Multipliers::default(),
        outer_objectives: Vec::new(),
        trajectory: Vec::new(),
    };
    if bar.free.is_empty() {
        report.status = SolverStatus::Converged;
        report.multipliers = bar.multipliers(&x, 1.0, None);
        report.kkt_residual = 0.0;
        report.max_violation = problem.max_violation(&x);
        return Ok(Solution { x, report });
    }

    let mut step = vec![0.0; problem.n];
    'outer: for outer in 0..opts.max_outer {
        report.outer_iterations = outer + 1;
        let mut last_d = None;
        for inner in 0..opts.max_inner {
            let (g, h) = bar.derivatives(&x, t);
            let Some(d) = newton_direction(&g, &h, opts.ridge) else {
                report.status = SolverStatus::NumericalFailure;
                break 'outer;
            };
            let slope = g.dot(&d);
            let dec2 = -slope;
            if !(dec2.is_finite()) {
                report.status = SolverStatus::NumericalFailure;
                break 'outer;
            }
            if dec2 / 2.0 <= opts.centering_tol {
                last_d = Some(d);
                break;
            }
            let mut s = bar.box_step(&x, &d);
            let accepted = loop {
                for (a, &i) in bar.free.iter().enumerate() {
                    step[i] = s * d[a];
                }
                if let Some(dphi) = bar.delta(&x, &step, t) {
                    if dphi <= opts.armijo * s * slope {
                        break true;
                    }
                }
                s *= opts.backtrack;
                if s < 1e-14 {
                    break false;
                }
            };
            if !accepted {
                // Stalled: fine if already nearly centred.
                if dec2 < 1e-6 {
                    last_d = Some(d);
                    break;
                }
                report.status = SolverStatus::NumericalFailure;
                break 'outer;
            }
            for &i in &bar.free {
                x[i] += step[i];
            }
            report.iterations += 1;
            if opts.record_trajectory {
                report.trajectory.push(IterateRecord {
                    outer,
                    inner,
                    t,
                    objective: problem.objective.value(&x),
                    decrement2: dec2,
                    step: s,
                });
            }
        }
        let f = problem.objective.value(&x);
        report.outer_objectives.push(f);
        report.duality_measure = if m == 0 { 0.0 } else { m as f64 / t };
        report.multipliers = bar.multipliers(&x, t, last_d.as_ref());
        report.kkt_residual = kkt_residual(problem, &x, &report.multipliers);
        if report.duality_measure <= opts.gap_tol * f.abs().max(1.0)
            && report.kkt_residual <= opts.kkt_tol
        {
            report.status = SolverStatus::Converged;
            break;
        }
        t *= opts.mu_factor;
    }

    // Rounding in `x + step` can leave a constraint that is active at the
    // optimum a few ulps outside. Move a hair towards the start, which is
    // strictly inside, so the returned point is itself a valid start.
    if !bar.strictly_inside(&x) {
        let mut theta = 1e-12;
        loop {
            let y: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a + theta * (b - a)).collect();
            if theta >= 1.0 || bar.strictly_inside(&y) {
                x = y;
                break;
            }
            theta = (theta * 10.0).min(1.0);
        }
        report.kkt_residual = kkt_residual(problem, &x, &report.multipliers);
        if report.status == SolverStatus::Converged && report.kkt_residual > opts.kkt_tol {
            report.status = SolverStatus::MaxIter;
        }
    }

    if problem.objective.value(&x) < f0 {
        x = start;
    }
    report.objective = problem.objective.value(&x);
    report.max_violation = problem.max_violation(&x);
    Ok(Solution { x, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn run(p: &ConvexProblem, x0: &[f64]) -> Solution {
        let sol = solve(p, x0, &opts()).unwrap();
        assert_eq!(sol.report.status, SolverStatus::Converged, "{:?}", sol.report);
        sol
    }

    #[test]
    fn scalar_rate_under_cap() {
        let mut p = ConvexProblem::new(1, Expr::new().log2_rate(0, 1.0, 1.0));
        p.constrain("cap", ConstraintClass::Affine, Expr::constant(-5.0).linear(0, 1.0));
        p.bound(0, 0.0, f64::INFINITY);
        let sol = run(&p, &[1.0]);
        assert_relative_eq!(sol.x[0], 5.0, max_relative = 1e-6);
        assert!(sol.report.kkt_residual <= 1e-6);
    }

    #[test]
    fn unconstrained_concave_quadratic() {
        let p = ConvexProblem::new(1, Expr::constant(-9.0).square(0, -1.0).linear(0, 6.0));
        let sol = run(&p, &[-4.0]);
        assert_relative_eq!(sol.x[0], 3.0, max_relative = 1e-9);
    }

    #[test]
    fn stationary_rate_minus_power() {
        let p = ConvexProblem::new(1, Expr::new().log2_rate(0, 1.0, 2.0).linear(0, -1.0));
        let mut q = p.clone();
        q.bound(0, 0.0, f64::INFINITY);
        let sol = run(&q, &[0.1]);
        assert_relative_eq!(sol.x[0], 2.0 / LN_2 - 1.0, max_relative = 1e-6);
    }

    #[test]
    fn rejects_infeasible_start() {
        let mut p = ConvexProblem::new(1, Expr::new().linear(0, 1.0));
        p.constrain("cap", ConstraintClass::Affine, Expr::constant(-1.0).linear(0, 1.0));
        let err = solve(&p, &[1.0], &opts()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart { ref name, .. } if name == "cap"));
        assert!(matches!(
            solve(&p, &[0.0, 1.0], &opts()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn fixed_variables_are_respected() {
        // max x + y, x + y <= 3, y fixed at 2
        let mut p = ConvexProblem::new(2, Expr::new().linear(0, 1.0).linear(1, 1.0));
        p.constrain(
            "sum",
            ConstraintClass::Affine,
            Expr::constant(-3.0).linear(0, 1.0).linear(1, 1.0),
        );
        p.fix(1, 2.0);
        let sol = run(&p, &[0.0, 0.0]);
        assert_eq!(sol.x[1], 2.0);
        assert_relative_eq!(sol.x[0], 1.0, max_relative = 1e-6);

        // a violated constraint on fixed variables only is an infeasible start
        let mut q = ConvexProblem::new(2, Expr::new().linear(0, 1.0));
        q.constrain("fixed", ConstraintClass::Affine, Expr::constant(-1.0).linear(1, 1.0));
        q.bound(0, 0.0, 1.0);
        q.fix(1, 2.0);
        assert!(solve(&q, &[0.5, 0.0], &opts()).is_err());
    }

    #[test]
    fn outer_objectives_increase() {
        // max log2(1+x) + log2(1+2y) s.t. x + y <= 2, x, y >= 0
        let mut p = ConvexProblem::new(
            2,
            Expr::new().log2_rate(0, 1.0, 1.0).log2_rate(1, 2.0, 1.0),
        );
        p.constrain(
            "budget",
            ConstraintClass::Affine,
            Expr::constant(-2.0).linear(0, 1.0).linear(1, 1.0),
        );
        p.bound(0, 0.0, f64::INFINITY);
        p.bound(1, 0.0, f64::INFINITY);
        let sol = run(&p, &[0.1, 0.1]);
        for w in sol.report.outer_objectives.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
        }
        // water level: 1 + x = 0.5 + y, x + y = 2
        assert_relative_eq!(sol.x[0], 0.75, max_relative = 1e-6);
        assert_relative_eq!(sol.x[1], 1.25, max_relative = 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut p = ConvexProblem::new(2, Expr::new().linear(0, 1.0).linear(1, 0.5));
        p.constrain(
            "disk",
            ConstraintClass::ConvexQuadratic,
            Expr::constant(-1.0).square(0, 1.0).square(1, 1.0),
        );
        let opts = SolverOptions {
            record_trajectory: true,
            ..opts()
        };
        let a = solve(&p, &[0.0, 0.0], &opts).unwrap();
        let b = solve(&p, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(a, b);
        assert!(!a.report.trajectory.is_empty());
        let mut buf = Vec::new();
        write_trajectory_csv(&a.report.trajectory, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("outer,inner,t,objective,decrement2,step\n"));
        assert_eq!(text.lines().count(), a.report.trajectory.len() + 1);
    }

    #[test]
    fn result_is_a_strict_start() {
        // optimum on the budget; the result must be usable as a new start
        let mut p = ConvexProblem::new(3, Expr::new().linear(0, 1.0).linear(1, 1.0).linear(2, 1.0));
        p.constrain(
            "budget",
            ConstraintClass::Affine,
            Expr::constant(-1.0).linear(0, 1.0).linear(1, 1.0).linear(2, 1.0),
        );
        for i in 0..3 {
            p.bound(i, 0.0, f64::INFINITY);
        }
        let a = run(&p, &[0.1, 0.2, 0.3]);
        assert!(p.constraints[0].expr.value(&a.x) < 0.0);
        let b = run(&p, &a.x);
        assert!(p.constraints[0].expr.value(&b.x) < 0.0);
        assert_relative_eq!(b.report.objective, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn never_worse_than_start() {
        let mut p = ConvexProblem::new(1, Expr::new().log2_rate(0, 1.0, 1.0));
        p.constrain("cap", ConstraintClass::Affine, Expr::constant(-1.0).linear(0, 1.0));
        p.bound(0, 0.0, f64::INFINITY);
        let x0 = [1.0 - 1e-12];
        let sol = solve(&p, &x0, &opts()).unwrap();
        assert!(sol.report.objective >= p.objective.value(&x0));
    }

    /// Dense grid oracle for a two-variable problem on a box.
    fn grid_max(p: &ConvexProblem, lo: [f64; 2], hi: [f64; 2], n: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let x = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                ];
                if p.max_violation(&x) <= 0.0 {
                    best = best.max(p.objective.value(&x));
                }
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matches_grid_oracle(
            g0 in 0.2f64..5.0, g1 in 0.2f64..5.0, budget in 0.5f64..4.0,
            w in 0.1f64..1.0,
        ) {
            // max log2(1+g0 x) + log2(1+g1 y) - w (x² + y²) over the budget simplex
            let obj = Expr::new()
                .log2_rate(0, g0, 1.0)
                .log2_rate(1, g1, 1.0)
                .square(0, -w)
                .square(1, -w);
            let mut p = ConvexProblem::new(2, obj);
            p.constrain(
                "budget",
                ConstraintClass::Affine,
                Expr::constant(-budget).linear(0, 1.0).linear(1, 1.0),
            );
            p.bound(0, 0.0, f64::INFINITY);
            p.bound(1, 0.0, f64::INFINITY);
            let x0 = [budget / 4.0, budget / 4.0];
            let sol = solve(&p, &x0, &SolverOptions::default()).unwrap();
            prop_assert_eq!(sol.report.status, SolverStatus::Converged);
            let oracle = grid_max(&p, [0.0, 0.0], [budget, budget], 400);
            prop_assert!(sol.report.objective >= oracle - 1e-6 * (1.0 + oracle.abs()));
            // grid spacing budget/400 bounds how far the oracle can lag
            let lag = sol.report.objective - oracle;
            prop_assert!(lag <= 0.05 * (1.0 + sol.report.objective.abs()));
        }

        #[test]
        fn constraint_atoms_are_convex(
            a in 0.0f64..0.9, b in 0.0f64..0.9, c in -2.0f64..2.0, d in -2.0f64..2.0,
        ) {
            let e = Expr::new()
                .square(1, 1.0)
                .plus(Atom::QuadOverLin {
                    num: vec![(0, 1.0), (1, -0.5)],
                    num_const: 0.2,
                    den_var: 0,
                    den_coef: -1.0,
                    den_const: 1.0,
                    coef: 1.0,
                })
                .plus(Atom::Reciprocal { var: 0, den_coef: -1.0, den_const: 1.0, coef: 2.0 })
                .log2_rate(1, 0.1, -1.0);
            let x = [a, c];
            let y = [b, d];
            let mid = [(a + b) / 2.0, (c + d) / 2.0];
            let chord = 0.5 * (e.value(&x) + e.value(&y));
            prop_assert!(e.value(&mid) <= chord + 1e-12 * (1.0 + chord.abs()));
        }
    }
}
