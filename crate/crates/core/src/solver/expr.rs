//! Smooth scalar functions assembled from a handful of atom shapes.
//!
//! Every atom is convex or concave depending on the sign of its
//! coefficient, which is all the subproblems here need: affine terms,
//! separable squares, a quadratic-over-linear term, a reciprocal of an
//! affine function and the Shannon rate `log2(1 + g x)`.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    /// `coef · x[var]`
    Linear { var: usize, coef: f64 },
    /// `coef · x[var]²`
    Square { var: usize, coef: f64 },
    /// `coef · (Σ a_i x_i + a_0)² / (b x[den_var] + b_0)`, denominator positive.
    QuadOverLin {
        num: Vec<(usize, f64)>,
        num_const: f64,
        den_var: usize,
        den_coef: f64,
        den_const: f64,
        coef: f64,
    },
    /// `coef / (b x[var] + b_0)`, denominator positive.
    Reciprocal {
        var: usize,
        den_coef: f64,
        den_const: f64,
        coef: f64,
    },
    /// `coef · log2(1 + gain · x[var])`
    Log2Rate { var: usize, gain: f64, coef: f64 },
}

impl Atom {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Atom::Linear { var, coef } => coef * x[*var],
            Atom::Square { var, coef } => coef * x[*var] * x[*var],
            Atom::QuadOverLin {
                num,
                num_const,
                den_var,
                den_coef,
                den_const,
                coef,
            } => {
                let d = den_coef * x[*den_var] + den_const;
                if !(d > 0.0) {
                    return f64::NAN;
                }
                let s = affine(num, *num_const, x);
                coef * s * s / d
            }
            Atom::Reciprocal {
                var,
                den_coef,
                den_const,
                coef,
            } => {
                let d = den_coef * x[*var] + den_const;
                if !(d > 0.0) {
                    return f64::NAN;
                }
                coef / d
            }
            Atom::Log2Rate { var, gain, coef } => {
                let gx = gain * x[*var];
                if !(gx > -1.0) {
                    return f64::NAN;
                }
                coef * gx.ln_1p() / LN_2
            }
        }
    }

    /// `value(x + step) − value(x)` without forming the two large values.
    fn delta(&self, x: &[f64], step: &[f64]) -> f64 {
        match self {
            Atom::Linear { var, coef } => coef * step[*var],
            Atom::Square { var, coef } => {
                let (v, dv) = (x[*var], step[*var]);
                coef * dv * (2.0 * v + dv)
            }
            Atom::QuadOverLin {
                num,
                num_const,
                den_var,
                den_coef,
                den_const,
                coef,
            } => {
                let d0 = den_coef * x[*den_var] + den_const;
                let dd = den_coef * step[*den_var];
                let d1 = d0 + dd;
                if !(d1 > 0.0) || !(d0 > 0.0) {
                    return f64::NAN;
                }
                let s0 = affine(num, *num_const, x);
                let ds: f64 = num.iter().map(|(i, a)| a * step[*i]).sum();
                coef * (ds * (2.0 * s0 + ds) * d0 - s0 * s0 * dd) / (d0 * d1)
            }
            Atom::Reciprocal {
                var,
                den_coef,
                den_const,
                coef,
            } => {
                let d0 = den_coef * x[*var] + den_const;
                let dd = den_coef * step[*var];
                let d1 = d0 + dd;
                if !(d1 > 0.0) || !(d0 > 0.0) {
                    return f64::NAN;
                }
                -coef * dd / (d0 * d1)
            }
            Atom::Log2Rate { var, gain, coef } => {
                let base = 1.0 + gain * x[*var];
                let ratio = gain * step[*var] / base;
                if !(ratio > -1.0) || !(base > 0.0) {
                    return f64::NAN;
                }
                coef * ratio.ln_1p() / LN_2
            }
        }
    }

    fn add_gradient(&self, x: &[f64], scale: f64, g: &mut [f64]) {
        match self {
            Atom::Linear { var, coef } => g[*var] += scale * coef,
            Atom::Square { var, coef } => g[*var] += scale * 2.0 * coef * x[*var],
            Atom::QuadOverLin {
                num,
                num_const,
                den_var,
                den_coef,
                den_const,
                coef,
            } => {
                let d = den_coef * x[*den_var] + den_const;
                let s = affine(num, *num_const, x);
                let k = scale * coef;
                for (i, a) in num {
                    g[*i] += k * 2.0 * s * a / d;
                }
                g[*den_var] -= k * s * s * den_coef / (d * d);
            }
            Atom::Reciprocal {
                var,
                den_coef,
                den_const,
                coef,
            } => {
                let d = den_coef * x[*var] + den_const;
                g[*var] -= scale * coef * den_coef / (d * d);
            }
            Atom::Log2Rate { var, gain, coef } => {
                g[*var] += scale * coef * gain / ((1.0 + gain * x[*var]) * LN_2);
            }
        }
    }

    fn add_hessian(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        match self {
            Atom::Linear { .. } => {}
            Atom::Square { var, coef } => h[(*var, *var)] += scale * 2.0 * coef,
            Atom::QuadOverLin {
                num,
                num_const,
                den_var,
                den_coef,
                den_const,
                coef,
            } => {
                // 2c/d · v vᵀ with v = a − (s/d) b e_den
                let d = den_coef * x[*den_var] + den_const;
                let s = affine(num, *num_const, x);
                let mut v: Vec<(usize, f64)> = num.clone();
                v.push((*den_var, -s / d * den_coef));
                let k = scale * 2.0 * coef / d;
                for (i, vi) in &v {
                    for (j, vj) in &v {
                        h[(*i, *j)] += k * vi * vj;
                    }
                }
            }
            Atom::Reciprocal {
                var,
                den_coef,
                den_const,
                coef,
            } => {
                let d = den_coef * x[*var] + den_const;
                h[(*var, *var)] += scale * 2.0 * coef * den_coef * den_coef / (d * d * d);
            }
            Atom::Log2Rate { var, gain, coef } => {
                let d = 1.0 + gain * x[*var];
                h[(*var, *var)] -= scale * coef * gain * gain / (d * d * LN_2);
            }
        }
    }

    fn push_vars(&self, out: &mut Vec<usize>) {
        match self {
            Atom::Linear { var, .. }
            | Atom::Square { var, .. }
            | Atom::Reciprocal { var, .. }
            | Atom::Log2Rate { var, .. } => out.push(*var),
            Atom::QuadOverLin { num, den_var, .. } => {
                out.extend(num.iter().map(|(i, _)| *i));
                out.push(*den_var);
            }
        }
    }
}

fn affine(terms: &[(usize, f64)], constant: f64, x: &[f64]) -> f64 {
    constant + terms.iter().map(|(i, a)| a * x[*i]).sum::<f64>()
}

/// `constant + Σ atoms`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub constant: f64,
    pub atoms: Vec<Atom>,
}

impl Expr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            atoms: Vec::new(),
        }
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn plus(mut self, atom: Atom) -> Self {
        self.atoms.push(atom);
        self
    }

    pub fn linear(self, var: usize, coef: f64) -> Self {
        self.plus(Atom::Linear { var, coef })
    }

    pub fn square(self, var: usize, coef: f64) -> Self {
        self.plus(Atom::Square { var, coef })
    }

    pub fn log2_rate(self, var: usize, gain: f64, coef: f64) -> Self {
        self.plus(Atom::Log2Rate { var, gain, coef })
    }

    /// `k · self`.
    pub fn scaled(mut self, k: f64) -> Self {
        self.constant *= k;
        for a in &mut self.atoms {
            match a {
                Atom::Linear { coef, .. }
                | Atom::Square { coef, .. }
                | Atom::QuadOverLin { coef, .. }
                | Atom::Reciprocal { coef, .. }
                | Atom::Log2Rate { coef, .. } => *coef *= k,
            }
        }
        self
    }

    pub fn push(&mut self, atom: Atom) {
        self.atoms.push(atom);
    }

    /// NaN outside the domain of any atom.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.atoms.iter().map(|a| a.value(x)).sum::<f64>()
    }

    pub fn delta(&self, x: &[f64], step: &[f64]) -> f64 {
        self.atoms.iter().map(|a| a.delta(x, step)).sum()
    }

    pub fn add_gradient(&self, x: &[f64], scale: f64, g: &mut [f64]) {
        for a in &self.atoms {
            a.add_gradient(x, scale, g);
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    pub fn add_hessian(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        for a in &self.atoms {
            a.add_hessian(x, scale, h);
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        self.add_hessian(x, 1.0, &mut h);
        h
    }

    /// Sorted, de-duplicated variable indices the expression reads.
    pub fn vars(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for a in &self.atoms {
            a.push_vars(&mut v);
        }
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample_expr() -> Expr {
        Expr::constant(0.3)
            .linear(0, -1.5)
            .square(1, 0.7)
            .plus(Atom::QuadOverLin {
                num: vec![(0, 1.0), (2, -1.0)],
                num_const: 0.1,
                den_var: 0,
                den_coef: -1.0,
                den_const: 1.0,
                coef: 0.4,
            })
            .plus(Atom::Reciprocal {
                var: 0,
                den_coef: -1.0,
                den_const: 1.0,
                coef: 1.0,
            })
            .log2_rate(2, 3.0, -2.0)
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let e = sample_expr();
        let x = [0.3, 0.8, 1.7];
        let g = e.gradient(&x);
        let h = e.hessian(&x);
        let step = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += step;
            xm[i] -= step;
            let fd = (e.value(&xp) - e.value(&xm)) / (2.0 * step);
            assert_relative_eq!(g[i], fd, max_relative = 1e-6, epsilon = 1e-8);
            let gp = e.gradient(&xp);
            let gm = e.gradient(&xm);
            for j in 0..3 {
                let fd2 = (gp[j] - gm[j]) / (2.0 * step);
                assert_relative_eq!(h[(i, j)], fd2, max_relative = 1e-5, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn out_of_domain_is_nan() {
        let e = sample_expr();
        assert!(e.value(&[1.2, 0.0, 0.0]).is_nan());
        assert!(e.delta(&[0.3, 0.0, 0.0], &[0.9, 0.0, 0.0]).is_nan());
    }

    #[test]
    fn vars_are_collected() {
        assert_eq!(sample_expr().vars(), vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn delta_matches_difference(
            x0 in 0.0f64..0.9, x1 in -2.0f64..2.0, x2 in 0.0f64..5.0,
            d0 in -0.5f64..0.05, d1 in -1.0f64..1.0, d2 in -0.5f64..1.0,
        ) {
            let e = sample_expr();
            let x = [x0, x1, x2];
            let step = [d0, d1, d2];
            let moved = [x0 + d0, x1 + d1, x2 + d2];
            let (a, b) = (e.value(&x), e.value(&moved));
            prop_assume!(a.is_finite() && b.is_finite());
            let d = e.delta(&x, &step);
            prop_assert!((d - (b - a)).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
        }
    }
}
