//! Gamma function, the blow-up coefficients `Γ_ij^(m)` and rates
//! `ρ_ij^(m)(ε)`, and a quadrature oracle for the radial neck integrals
//! that generate them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GapGeometry;
use crate::quad::{geometric_breaks, integrate_breaks, QuadOptions};

/// `|i - j/m|` below this selects the logarithmic branch.
pub const LOG_BRANCH_TOL: f64 = 1e-12;

/// Admissible index pairs `ij ∈ {12, 34}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoeffIndex {
    #[serde(rename = "12")]
    I12,
    #[serde(rename = "34")]
    I34,
}

impl CoeffIndex {
    pub fn new(i: u32, j: u32) -> Result<Self> {
        match (i, j) {
            (1, 2) => Ok(CoeffIndex::I12),
            (3, 4) => Ok(CoeffIndex::I34),
            _ => Err(Error::domain("CoeffIndex", format!("ij = {i}{j} is not one of 12, 34"))),
        }
    }

    pub fn i(self) -> u32 {
        match self {
            CoeffIndex::I12 => 1,
            CoeffIndex::I34 => 3,
        }
    }

    pub fn j(self) -> u32 {
        match self {
            CoeffIndex::I12 => 2,
            CoeffIndex::I34 => 4,
        }
    }

    /// `i - j/m`, the blow-up exponent of `ρ_ij^(m)` on the power branch.
    pub fn exponent(self, m: f64) -> f64 {
        self.i() as f64 - self.j() as f64 / m
    }

    /// True when `i = j/m` and the rate is `|ln ε|`.
    pub fn is_log_branch(self, m: f64) -> bool {
        self.exponent(m).abs() <= LOG_BRANCH_TOL
    }
}

/// Euler's Gamma function on `(0, 30]`.
pub fn gamma_fn(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain("gamma_fn", format!("argument must be positive, got {s}")));
    }
    Ok(statrs::function::gamma::gamma(s))
}

fn check_m(op: &'static str, m: f64) -> Result<()> {
    if m >= 2.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("m must be >= 2, got {m}")))
    }
}

/// `Γ_ij^(m) = Γ(i - j/m) Γ(j/m) / (m (2κ)^(j/m))`, or `1 / (m (2κ)^(j/m))`
/// on the logarithmic branch `i = j/m`.
pub fn gamma_coeff(idx: CoeffIndex, m: f64, kappa: f64) -> Result<f64> {
    check_m("gamma_coeff", m)?;
    if !(kappa > 0.0) {
        return Err(Error::domain("gamma_coeff", format!("kappa must be positive, got {kappa}")));
    }
    let j_over_m = idx.j() as f64 / m;
    let prefactor = 1.0 / (m * (2.0 * kappa).powf(j_over_m));
    let exponent = idx.exponent(m);
    if idx.is_log_branch(m) {
        Ok(prefactor)
    } else if exponent > 0.0 {
        Ok(prefactor * gamma_fn(exponent)? * gamma_fn(j_over_m)?)
    } else {
        Err(Error::domain("gamma_coeff", format!("i < j/m for ij = {}{}, m = {m}", idx.i(), idx.j())))
    }
}

/// `ρ_ij^(m)(ε) = ε^-(i - j/m)`, or `|ln ε|` on the logarithmic branch.
pub fn rate(idx: CoeffIndex, m: f64, epsilon: f64) -> Result<f64> {
    check_m("rate", m)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain("rate", format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if idx.is_log_branch(m) {
        Ok(epsilon.ln().abs())
    } else {
        Ok(epsilon.powf(-idx.exponent(m)))
    }
}

/// Adaptive quadrature of `∫₀^r s^(j-1) (ε + 2κ s^m)^(-i) ds`.
///
/// Evaluated in the stretched variable `s = (ε/2κ)^(1/m) t`, where the
/// integrand is `O(1)` near the apex and decays algebraically beyond `t ~ 1`.
pub fn neck_scalar_integral(i: u32, j: u32, geom: &GapGeometry, tol: f64) -> Result<f64> {
    if i < 1 || j < 1 {
        return Err(Error::domain("neck_scalar_integral", "need i >= 1 and j >= 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("neck_scalar_integral", "tolerance must be positive"));
    }
    let scale = geom.boundary_layer();
    let upper = geom.r / scale;
    let m = geom.m;
    let jm1 = (j - 1) as i32;
    let neg_i = -(i as i32);
    let r = integrate_breaks(
        |t| Ok(t.powi(jm1) * (1.0 + t.powf(m)).powi(neg_i)),
        &geometric_breaks(upper),
        &QuadOptions::relative(tol),
    )?;
    Ok(scale.powi(j as i32) * geom.epsilon.powi(neg_i) * r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gamma_examples() {
        assert_relative_eq!(gamma_fn(1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(gamma_fn(0.5).unwrap(), PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma_fn(2.5).unwrap(), 0.75 * PI.sqrt(), max_relative = 1e-14);
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.5).is_err());
    }

    #[test]
    fn gamma_matches_high_precision_values() {
        // Reference values from 30-digit arithmetic.
        let table = [
            (0.01, 99.4325851191506037135329888705),
            (0.1, 9.51350769866873183629248717727),
            (1.5, 0.886226925452758013649083741671),
            (3.7, 4.17065178379660316539360299862),
            (7.25, 1155.38101391998968720270376797),
            (12.5, 136843365.465565857255649830495),
            (29.9, 6.30417448837375151099268754329e30),
        ];
        for (s, expected) in table {
            assert_relative_eq!(gamma_fn(s).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn reflection_sanity() {
        let prod = gamma_fn(1.0 / 3.0).unwrap() * gamma_fn(2.0 / 3.0).unwrap();
        assert_relative_eq!(prod, 2.0 * PI / 3f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn coeff_index_admissibility() {
        assert_eq!(CoeffIndex::new(1, 2).unwrap(), CoeffIndex::I12);
        assert_eq!(CoeffIndex::new(3, 4).unwrap(), CoeffIndex::I34);
        assert!(CoeffIndex::new(1, 4).is_err());
        assert!(CoeffIndex::new(3, 2).is_err());
    }

    #[test]
    fn gamma_coeff_examples() {
        assert_relative_eq!(gamma_coeff(CoeffIndex::I34, 2.0, 1.0).unwrap(), 0.125, max_relative = 1e-14);
        assert_eq!(gamma_coeff(CoeffIndex::I12, 2.0, 0.5).unwrap(), 0.5);
        assert_relative_eq!(
            gamma_coeff(CoeffIndex::I12, 4.0, 1.0).unwrap(),
            0.555360367269795780876985123758,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            gamma_coeff(CoeffIndex::I12, 3.0, 1.0).unwrap(),
            0.7617479997615430711133484761,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            gamma_coeff(CoeffIndex::I34, 3.0, 1.0).unwrap(),
            0.106638037734986993257501783219,
            max_relative = 1e-13
        );
    }

    #[test]
    fn quadratic_profile_closed_forms() {
        for kappa in [0.25, 0.5, 1.0, 3.0] {
            assert_relative_eq!(
                gamma_coeff(CoeffIndex::I12, 2.0, kappa).unwrap(),
                1.0 / (4.0 * kappa),
                max_relative = 1e-15
            );
            assert_relative_eq!(
                gamma_coeff(CoeffIndex::I34, 2.0, kappa).unwrap(),
                1.0 / (8.0 * kappa * kappa),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn log_branch_is_robust_near_two() {
        assert!(CoeffIndex::I12.is_log_branch(2.0));
        assert!(CoeffIndex::I12.is_log_branch(2.0 + 1e-13));
        assert!(!CoeffIndex::I12.is_log_branch(2.001));
        assert!(!CoeffIndex::I34.is_log_branch(2.0));
    }

    #[test]
    fn rate_examples() {
        assert_relative_eq!(rate(CoeffIndex::I12, 2.0, 0.01).unwrap(), 4.605170185988091, max_relative = 1e-14);
        assert_relative_eq!(rate(CoeffIndex::I34, 2.0, 0.01).unwrap(), 100.0, max_relative = 1e-13);
        assert_relative_eq!(rate(CoeffIndex::I34, 3.0, 0.001).unwrap(), 1e5, max_relative = 1e-12);
        assert!(rate(CoeffIndex::I12, 2.0, 1.0).is_err());
        assert!(rate(CoeffIndex::I12, 2.0, 0.0).is_err());
        assert!(rate(CoeffIndex::I12, 1.5, 0.1).is_err());
    }

    #[test]
    fn neck_integral_matches_log_antiderivative() {
        // (1/4κ) ln(1 + 2κ r²/ε) with κ = 1/2, r = 1: closed form 4.60522018348825802...
        let geom = GapGeometry {
            m: 2.0,
            kappa: 0.5,
            epsilon: 1e-4,
            r: 1.0,
            big_r: 2.0,
        };
        let v = neck_scalar_integral(1, 2, &geom, 1e-10).unwrap();
        assert_relative_eq!(v, 4.60522018348825802220364949271, max_relative = 1e-9);
    }

    #[test]
    fn neck_integral_squeeze_scaling_at_m2() {
        let geom = GapGeometry {
            m: 2.0,
            kappa: 0.5,
            epsilon: 1e-5,
            r: 1.0,
            big_r: 2.0,
        };
        let a = neck_scalar_integral(3, 4, &geom, 1e-10).unwrap();
        let b = neck_scalar_integral(3, 4, &geom.with_epsilon(1e-6).unwrap(), 1e-10).unwrap();
        assert_relative_eq!(b / a, 10.0, max_relative = 1e-3);
    }

    #[test]
    fn neck_integral_matches_beta_limit_at_m3() {
        let geom = GapGeometry {
            m: 3.0,
            kappa: 1.0,
            epsilon: 1e-6,
            r: 0.5,
            big_r: 1.0,
        };
        let v = neck_scalar_integral(1, 2, &geom, 1e-10).unwrap();
        // Independent 30-digit quadrature of the same integral.
        assert_relative_eq!(v, 75.174800976152021403449113632, max_relative = 1e-8);
        // Beta-integral limit ε^(-1/3) (2κ)^(-2/3) Γ(2/3)Γ(1/3) / 3.
        let limit = 76.1747999761543071113348476099;
        assert!((v - limit).abs() / limit < 0.02);
    }

    #[test]
    fn neck_integral_power_scaling() {
        for (m, i, j) in [(3.0, 3, 4), (3.0, 1, 2), (4.0, 3, 4)] {
            let geom = GapGeometry {
                m,
                kappa: 1.0,
                epsilon: 1e-6,
                r: 0.5,
                big_r: 1.0,
            };
            let idx = CoeffIndex::new(i, j).unwrap();
            let a = neck_scalar_integral(i, j, &geom, 1e-11).unwrap();
            let b = neck_scalar_integral(i, j, &geom.with_epsilon(5e-7).unwrap(), 1e-11).unwrap();
            let expected = 2f64.powf(idx.exponent(m));
            assert!(((b / a) - expected).abs() / expected < 0.01, "m={m} ij={i}{j}: {}", b / a);
        }
    }

    #[test]
    fn log_coefficient_of_neck_integral_matches_degenerate_branch() {
        let kappa = 0.8;
        let base = GapGeometry {
            m: 2.0,
            kappa,
            epsilon: 1e-4,
            r: 0.5,
            big_r: 1.0,
        };
        let a = neck_scalar_integral(1, 2, &base, 1e-11).unwrap();
        let b = neck_scalar_integral(1, 2, &base.with_epsilon(1e-6).unwrap(), 1e-11).unwrap();
        let slope = (b - a) / (1e-6f64.ln().abs() - 1e-4f64.ln().abs());
        let coeff = gamma_coeff(CoeffIndex::I12, 2.0, kappa).unwrap();
        assert!((slope - coeff).abs() / coeff < 0.01);
    }
}
