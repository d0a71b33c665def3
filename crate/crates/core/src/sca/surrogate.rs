//! One-sided bounds used to convexify the per-frame problem. Each bound is
//! tight at its expansion point.

use crate::error::{positive, Result};

/// First-order lower bound of `1/x` around `x_bar`: `2/x̄ − x/x̄²`.
pub fn taylor_inv_lower(x: f64, x_bar: f64) -> Result<f64> {
    positive("x", x)?;
    positive("x_bar", x_bar)?;
    Ok(2.0 / x_bar - x / (x_bar * x_bar))
}

/// First-order lower bound of `x²/y` around `(x̄, ȳ)`: `2 x̄ x / ȳ − (x̄/ȳ)² y`.
pub fn taylor_quad_over_lin_lower(x: f64, y: f64, x_bar: f64, y_bar: f64) -> Result<f64> {
    positive("x", x)?;
    positive("y", y)?;
    positive("x_bar", x_bar)?;
    positive("y_bar", y_bar)?;
    let r = x_bar / y_bar;
    Ok(2.0 * r * x - r * r * y)
}

/// Convex upper bound of `ψ α̂`: `½ (ψ̄/ᾱ̂) α̂² + ½ (ᾱ̂/ψ̄) ψ²`.
pub fn bilinear_upper(psi: f64, alpha_hat: f64, psi_bar: f64, alpha_hat_bar: f64) -> Result<f64> {
    positive("psi", psi)?;
    positive("alpha_hat", alpha_hat)?;
    positive("psi_bar", psi_bar)?;
    positive("alpha_hat_bar", alpha_hat_bar)?;
    Ok(0.5 * (psi_bar / alpha_hat_bar) * alpha_hat * alpha_hat
        + 0.5 * (alpha_hat_bar / psi_bar) * psi * psi)
}

/// Energy-coupling constraint of one node written as a difference of
/// convex terms:
///
/// ```text
/// p_i + A (α − p_e)² / (4 (1 − α))  <=  E / (τ (1 − α)) + A (α + p_e)² / (4 (1 − α))
/// ```
///
/// which is `p_i (1 − α) τ <= E + η τ α p_e ‖g‖²` with `A = η ‖g‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCoupling {
    /// Battery over frame length, `E / τ`.
    pub e_over_tau: f64,
    /// `η ‖g‖²` in the caller's power units.
    pub a: f64,
}

impl PowerCoupling {
    /// Right-hand side of the exact (relaxed) constraint.
    pub fn rhs_exact(&self, alpha: f64, p_e: f64) -> f64 {
        let s = alpha + p_e;
        (self.e_over_tau + 0.25 * self.a * s * s) / (1.0 - alpha)
    }

    /// Concave lower bound of [`Self::rhs_exact`] around `(ᾱ, p̄_e)`.
    pub fn rhs_surrogate(&self, alpha: f64, p_e: f64, alpha_bar: f64, p_e_bar: f64) -> f64 {
        let y = 1.0 - alpha;
        let y_bar = 1.0 - alpha_bar;
        let inv = 2.0 / y_bar - y / (y_bar * y_bar);
        let r = (alpha_bar + p_e_bar) / y_bar;
        let qol = 2.0 * r * (alpha + p_e) - r * r * y;
        self.e_over_tau * inv + 0.25 * self.a * qol
    }

    /// Convex left-hand side excluding `p_i`.
    pub fn lhs_penalty(&self, alpha: f64, p_e: f64) -> f64 {
        let d = alpha - p_e;
        0.25 * self.a * d * d / (1.0 - alpha)
    }

    /// Largest `p_i` the exact constraint allows: `(E/τ + A α p_e) / (1 − α)`.
    pub fn power_cap(&self, alpha: f64, p_e: f64) -> f64 {
        (self.e_over_tau + self.a * alpha * p_e) / (1.0 - alpha)
    }
}

/// Smooth time-slack form `1/(1 − α) − α̂` (feasible when `<= 0`).
pub fn time_slack(alpha: f64, alpha_hat: f64) -> f64 {
    1.0 / (1.0 - alpha) - alpha_hat
}

/// Second-order-cone form `‖(1, (α̂ − 1 + α)/2)‖ − (α̂ + 1 − α)/2`
/// (feasible when `<= 0`).
pub fn time_slack_soc(alpha: f64, alpha_hat: f64) -> f64 {
    1.0f64.hypot(0.5 * (alpha_hat - 1.0 + alpha)) - 0.5 * (alpha_hat + 1.0 - alpha)
}

/// Whether the smooth and cone forms agree on feasibility at `(α, α̂)`.
/// Points within `tol` of either boundary count as feasible for both.
pub fn soc_parity(alpha: f64, alpha_hat: f64, tol: f64) -> bool {
    let smooth = time_slack(alpha, alpha_hat) <= tol * (1.0 + alpha_hat.abs());
    let soc = time_slack_soc(alpha, alpha_hat) <= tol * (1.0 + alpha_hat.abs());
    smooth == soc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn inverse_bound_examples() {
        assert_eq!(taylor_inv_lower(2.0, 2.0).unwrap(), 0.5);
        assert_eq!(taylor_inv_lower(1.0, 2.0).unwrap(), 0.75);
        assert_eq!(taylor_inv_lower(4.0, 2.0).unwrap(), 0.0);
        assert!(taylor_inv_lower(0.0, 2.0).is_err());
        assert!(taylor_inv_lower(1.0, -2.0).is_err());
    }

    #[test]
    fn quad_over_lin_bound_examples() {
        assert_eq!(taylor_quad_over_lin_lower(1.0, 2.0, 1.0, 2.0).unwrap(), 0.5);
        assert_eq!(taylor_quad_over_lin_lower(2.0, 2.0, 1.0, 2.0).unwrap(), 1.5);
        assert_eq!(taylor_quad_over_lin_lower(1.0, 4.0, 1.0, 2.0).unwrap(), 0.0);
        assert!(taylor_quad_over_lin_lower(1.0, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn bilinear_bound_examples() {
        assert_eq!(bilinear_upper(2.0, 3.0, 2.0, 3.0).unwrap(), 6.0);
        assert_relative_eq!(bilinear_upper(1.0, 1.0, 2.0, 3.0).unwrap(), 13.0 / 12.0);
        assert_eq!(bilinear_upper(4.0, 6.0, 2.0, 3.0).unwrap(), 24.0);
        assert!(bilinear_upper(-1.0, 1.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn coupling_is_tight_at_expansion_point() {
        let c = PowerCoupling {
            e_over_tau: 3.7,
            a: 2.2,
        };
        let (al, pe) = (0.37, 0.21);
        assert_relative_eq!(
            c.rhs_surrogate(al, pe, al, pe),
            c.rhs_exact(al, pe),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            c.rhs_exact(al, pe) - c.lhs_penalty(al, pe),
            c.power_cap(al, pe),
            max_relative = 1e-12
        );
    }

    #[test]
    fn coupling_without_battery_on_the_diagonal() {
        // E = 0 and p_e = α: the penalty vanishes and the cap is A α²/(1−α)
        let c = PowerCoupling {
            e_over_tau: 0.0,
            a: 1.5,
        };
        let al = 0.4;
        assert_eq!(c.lhs_penalty(al, al), 0.0);
        assert_relative_eq!(c.rhs_exact(al, al), 1.5 * al * al / (1.0 - al), max_relative = 1e-14);
    }

    #[test]
    fn time_slack_examples() {
        assert_eq!(time_slack(0.5, 2.0), 0.0);
        assert_eq!(time_slack_soc(0.5, 2.0), 0.0);
        assert_eq!(time_slack(0.5, 3.0), -1.0);
        assert!(time_slack_soc(0.5, 3.0) < 0.0);
        assert!(time_slack(0.5, 1.5) > 0.0 && time_slack_soc(0.5, 1.5) > 0.0);
        assert!(soc_parity(0.5, 2.0, 1e-12));
    }

    proptest! {
        #[test]
        fn bounds_hold(
            x in 1e-3f64..10.0, y in 1e-3f64..10.0, xb in 1e-3f64..10.0, yb in 1e-3f64..10.0,
        ) {
            prop_assert!(taylor_inv_lower(x, xb).unwrap() <= 1.0 / x + 1e-12 / x);
            let q = taylor_quad_over_lin_lower(x, y, xb, yb).unwrap();
            prop_assert!(q <= x * x / y + 1e-12 * (x * x / y));
            let b = bilinear_upper(x, y, xb, yb).unwrap();
            prop_assert!(b >= x * y - 1e-12 * x * y);
        }

        #[test]
        fn coupling_surrogate_is_a_lower_bound(
            e in 0.0f64..10.0, a in 0.0f64..10.0,
            al in 0.01f64..0.99, pe in 0.0f64..1.0, alb in 0.01f64..0.99, peb in 0.0f64..1.0,
        ) {
            let c = PowerCoupling { e_over_tau: e, a };
            let exact = c.rhs_exact(al, pe);
            prop_assert!(c.rhs_surrogate(al, pe, alb, peb) <= exact + 1e-10 * (1.0 + exact));
        }

        #[test]
        fn soc_forms_agree(al in 0.01f64..0.99, ah in 0.5f64..150.0) {
            prop_assert!(soc_parity(al, ah, 1e-12));
        }
    }
}
