//! Physical-layer formulas: harvested energy, SNR, Shannon throughput,
//! effective energy and the minimum-SNR power floor.

use std::f64::consts::LN_2;

use crate::error::{non_negative, positive, Result};

/// `max(d, d_ref)^-exponent`.
pub fn path_loss(d: f64, exponent: f64, d_ref: f64) -> f64 {
    d.max(d_ref).powf(-exponent)
}

/// Energy (J) harvested in one frame: `eta · tau · alpha · p_e · ‖g‖²`.
pub fn harvested_energy(eta: f64, tau: f64, alpha: f64, p_e: f64, g_norm2: f64) -> Result<f64> {
    non_negative("eta", eta)?;
    non_negative("tau", tau)?;
    non_negative("alpha", alpha)?;
    non_negative("p_e", p_e)?;
    non_negative("g_norm2", g_norm2)?;
    Ok(eta * tau * alpha * p_e * g_norm2)
}

/// Linear SNR at the access point after maximum-ratio combining.
pub fn snr(p_i: f64, h_norm2: f64, sigma2: f64) -> f64 {
    p_i * h_norm2 / sigma2
}

/// `p ↦ w · log2(1 + p ‖h‖² / σ²)` for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFn {
    pub w: f64,
    pub h_norm2: f64,
    pub sigma2: f64,
}

impl RateFn {
    pub fn new(w: f64, h_norm2: f64, sigma2: f64) -> Result<Self> {
        positive("w", w)?;
        positive("h_norm2", h_norm2)?;
        positive("sigma2", sigma2)?;
        Ok(Self { w, h_norm2, sigma2 })
    }

    /// SNR per watt.
    pub fn gain(&self) -> f64 {
        self.h_norm2 / self.sigma2
    }

    /// bit/s.
    pub fn rate(&self, p_i: f64) -> f64 {
        self.w * (self.gain() * p_i).ln_1p() / LN_2
    }

    pub fn derivative(&self, p_i: f64) -> f64 {
        let c = self.gain();
        self.w * c / ((1.0 + c * p_i) * LN_2)
    }

    pub fn second_derivative(&self, p_i: f64) -> f64 {
        let c = self.gain();
        let d = 1.0 + c * p_i;
        -self.w * c * c / (d * d * LN_2)
    }
}

pub fn throughput(rate: &RateFn, p_i: f64) -> f64 {
    rate.rate(p_i)
}

/// Energy available for transmission: battery plus this frame's harvest.
pub fn effective_energy(battery: f64, harvested: f64) -> f64 {
    battery + harvested
}

/// Transmit power that just meets `gamma_min`.
pub fn min_power(gamma_min: f64, sigma2: f64, h_norm2: f64) -> f64 {
    gamma_min * sigma2 / h_norm2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn harvested_energy_examples() {
        assert_relative_eq!(
            harvested_energy(0.6, 1e-3, 0.5, 1.0, 2.0).unwrap(),
            6.0e-4,
            max_relative = 1e-14
        );
        assert_eq!(harvested_energy(0.6, 1e-3, 0.0, 1.0, 2.0).unwrap(), 0.0);
        assert_relative_eq!(
            harvested_energy(0.6, 1e-3, 1.0, 19.9526, 16.0 * 1e-6).unwrap(),
            1.9154e-7,
            max_relative = 1e-4
        );
        assert!(harvested_energy(0.6, 1e-3, 0.5, -1.0, 2.0).is_err());
    }

    #[test]
    fn harvested_energy_analytic_bound() {
        // 0 <= e <= eta tau P_max M PL_max with PL_max = 1 at the reference distance
        let (eta, tau, p_max, m) = (0.6, 1e-3, 19.9526, 16.0);
        let bound = eta * tau * p_max * m;
        let e = harvested_energy(eta, tau, 1.0, p_max, m).unwrap();
        assert!(e >= 0.0 && e <= bound * (1.0 + 1e-15));
    }

    #[test]
    fn snr_examples() {
        assert_relative_eq!(snr(1e-2, 1.6e-5, 1e-13), 1.6e6, max_relative = 1e-12);
        assert_eq!(snr(0.0, 1.6e-5, 1e-13), 0.0);
        assert_relative_eq!(snr(2e-3, 1.6e-5, 1e-13), 2.0 * snr(1e-3, 1.6e-5, 1e-13));
        // gamma <= P_bar N / sigma2 with unit per-antenna gains
        assert!(snr(1e-2, 16.0, 1e-13) <= 1e-2 * 16.0 / 1e-13);
    }

    #[test]
    fn throughput_examples() {
        let unit = RateFn::new(2.5e6, 1e-13, 1e-13).unwrap();
        assert_relative_eq!(throughput(&unit, 1.0), 2.5e6, max_relative = 1e-14);
        assert_eq!(throughput(&unit, 0.0), 0.0);
        let r = RateFn::new(2.5e6, 1.6e-5, 1e-13).unwrap();
        // 2.5e6 * log2(1 + 1.6e6) = 5.1510e7
        assert_relative_eq!(throughput(&r, 1e-2), 5.151e7, max_relative = 1e-3);
        let cap = 10e6 * (1.0 + 1e-2 * 16.0 / 1e-13f64).log2();
        assert!(throughput(&r, 1e-2) <= cap);
    }

    #[test]
    fn effective_energy_examples() {
        assert_eq!(effective_energy(0.0, 6e-4), 6e-4);
        assert_eq!(effective_energy(1e-3, 0.0), 1e-3);
        assert_relative_eq!(effective_energy(1e-3, 6e-4), 1.6e-3);
    }

    #[test]
    fn min_power_examples() {
        assert_relative_eq!(min_power(0.1, 1e-13, 1.6e-5), 6.25e-10, max_relative = 1e-12);
        assert_eq!(min_power(0.0, 1e-13, 1.6e-5), 0.0);
        let grid: Vec<f64> = (0..50).map(|i| 1e-8 * 1.5f64.powi(i)).collect();
        for w in grid.windows(2) {
            assert!(min_power(0.1, 1e-13, w[1]) < min_power(0.1, 1e-13, w[0]));
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let r = RateFn::new(2.5e6, 4.7e-6, 1e-13).unwrap();
        for i in 0..40 {
            let p = 1e-12 * 10f64.powf(i as f64 * 0.25);
            let h = p * 1e-5;
            let fd = (r.rate(p + h) - r.rate(p - h)) / (2.0 * h);
            assert_relative_eq!(r.derivative(p), fd, max_relative = 1e-6);
            let fd2 = (r.derivative(p + h) - r.derivative(p - h)) / (2.0 * h);
            assert_relative_eq!(r.second_derivative(p), fd2, max_relative = 1e-5);
        }
    }

    proptest! {
        #[test]
        fn throughput_is_increasing_and_concave(
            a in 1e-9f64..1e-2, b in 1e-9f64..1e-2, c in 1e-9f64..1e-2,
            h in 1e-8f64..1e-3,
        ) {
            let mut p = [a, b, c];
            p.sort_by(f64::total_cmp);
            prop_assume!(p[1] - p[0] > 1e-12 && p[2] - p[1] > 1e-12);
            let r = RateFn::new(2.5e6, h, 1e-13).unwrap();
            prop_assert!(r.rate(p[0]) < r.rate(p[1]) && r.rate(p[1]) < r.rate(p[2]));
            let mid = 0.5 * (p[0] + p[2]);
            let chord = 0.5 * (r.rate(p[0]) + r.rate(p[2]));
            prop_assert!(r.rate(mid) >= chord - 1e-12 * chord.abs());
        }

        #[test]
        fn harvest_is_bilinear(
            a in 0.0f64..1.0, a2 in 0.0f64..1.0, p in 0.0f64..20.0, p2 in 0.0f64..20.0,
            g in 1e-8f64..1e-2,
        ) {
            let e = |al, pe| harvested_energy(0.6, 1e-3, al, pe, g).unwrap();
            let lhs = e(a, p) + e(a2, p2) - e(a, p2) - e(a2, p);
            let rhs = (a - a2) * (p - p2) * 0.6 * 1e-3 * g;
            let scale = e(1.0, 20.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
