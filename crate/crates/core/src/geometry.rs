//! The thin neck between the two particle apexes.
//!
//! Near the origin the facing surfaces are `x3 = ±(ε/2 + h(x'))` with
//! `h(x') = κ|x'|^m`, so the local gap width is `δ(x') = ε + 2κ|x'|^m`. The
//! neck `Ω_r` is the part of the gap with `|x'| < r`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Tolerance used when classifying a point as inside the closed neck.
const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapGeometry {
    /// Convexity exponent, `m >= 2`.
    pub m: f64,
    pub kappa: f64,
    /// Interparticle distance.
    pub epsilon: f64,
    /// Neck radius.
    pub r: f64,
    /// Particle scale; the centre of particle 1 sits at `(0, 0, ε/2 + R)`.
    #[serde(rename = "R")]
    pub big_r: f64,
}

/// A point `x = (x', x3)` in the neck.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeckPoint {
    pub x: [f64; 3],
}

impl NeckPoint {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        NeckPoint { x: [x1, x2, x3] }
    }

    pub fn planar(&self) -> [f64; 2] {
        [self.x[0], self.x[1]]
    }

    pub fn radius(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }
}

/// Value and planar gradient of a function of `x'`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarValue {
    pub value: f64,
    pub grad: [f64; 2],
}

/// A point on the lower face of particle 1 with its outward unit normal
/// (pointing into the gap) and the area element `dS / dx'`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub area_factor: f64,
}

/// `1 / (m R^(m-1))`, the profile coefficient of the axisymmetric body
/// `|x'|^m + |x3 ∓ (ε/2 + R)|^m = R^m`.
pub fn ellipsoid_kappa(m: f64, big_r: f64) -> Result<f64> {
    if !(m >= 2.0) || !m.is_finite() {
        return Err(Error::domain("ellipsoid_kappa", format!("m must be >= 2, got {m}")));
    }
    if !(big_r > 0.0) || !big_r.is_finite() {
        return Err(Error::domain("ellipsoid_kappa", format!("R must be positive, got {big_r}")));
    }
    Ok(1.0 / (m * big_r.powf(m - 1.0)))
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

impl GapGeometry {
    /// Validates and builds a geometry. A warning is logged when `ε` is not
    /// small against the neck, `ε >= κ r^m`.
    pub fn new(m: f64, kappa: f64, epsilon: f64, r: f64, big_r: f64) -> Result<Self> {
        let g = GapGeometry {
            m,
            kappa,
            epsilon,
            r,
            big_r,
        };
        g.validate()?;
        if epsilon >= kappa * r.powf(m) {
            warn!(
                "epsilon = {epsilon} is not small against kappa r^m = {}; asymptotic formulas may be inaccurate",
                kappa * r.powf(m)
            );
        }
        Ok(g)
    }

    /// Builds a geometry with the default neck radius `r = R/2`.
    pub fn with_default_neck(m: f64, kappa: f64, epsilon: f64, big_r: f64) -> Result<Self> {
        GapGeometry::new(m, kappa, epsilon, 0.5 * big_r, big_r)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.m, self.kappa, self.epsilon, self.r, self.big_r]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::domain("geometry", "parameters must be finite"));
        }
        if self.m < 2.0 {
            return Err(Error::domain("geometry", format!("m must be >= 2, got {}", self.m)));
        }
        if self.kappa <= 0.0 {
            return Err(Error::domain("geometry", format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::domain("geometry", format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.r > 0.0 && self.r < self.big_r) {
            return Err(Error::domain(
                "geometry",
                format!("need 0 < r < R, got r = {}, R = {}", self.r, self.big_r),
            ));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        GapGeometry::new(self.m, self.kappa, epsilon, self.r, self.big_r)
    }

    pub fn is_quadratic(&self) -> bool {
        self.m == 2.0
    }

    /// Inner length scale `(ε / 2κ)^(1/m)` of the neck: the radius at which
    /// `2κ|x'|^m` equals `ε`.
    pub fn boundary_layer(&self) -> f64 {
        (self.epsilon / (2.0 * self.kappa)).powf(1.0 / self.m)
    }

    fn check_planar(&self, op: &'static str, xp: [f64; 2], strict: bool) -> Result<f64> {
        let s = norm2(xp);
        let outside = if strict { s >= self.r } else { s > self.r };
        if outside || !s.is_finite() {
            return Err(Error::domain(
                op,
                format!("|x'| = {s} is outside the neck radius r = {}", self.r),
            ));
        }
        Ok(s)
    }

    /// `|x'|^(m-2)`, with the value at `x' = 0` taken as 1 for `m = 2` and 0
    /// otherwise.
    fn radial_factor(&self, s: f64) -> f64 {
        if self.is_quadratic() {
            1.0
        } else if s == 0.0 {
            0.0
        } else {
            ((self.m - 2.0) * s.ln()).exp()
        }
    }

    /// Profile `h(x') = κ|x'|^m` with its planar gradient.
    pub fn half_gap(&self, xp: [f64; 2]) -> Result<PlanarValue> {
        let s = self.check_planar("half_gap", xp, false)?;
        let q = self.radial_factor(s);
        let c = self.kappa * self.m * q;
        Ok(PlanarValue {
            value: self.kappa * s.powf(self.m),
            grad: [c * xp[0], c * xp[1]],
        })
    }

    /// `√(1 + |∇'h|²)`.
    pub fn area_factor(&self, xp: [f64; 2]) -> Result<f64> {
        let h = self.half_gap(xp)?;
        Ok((1.0 + h.grad[0] * h.grad[0] + h.grad[1] * h.grad[1]).sqrt())
    }

    /// Gap width `δ(x') = ε + 2κ|x'|^m` with its planar gradient.
    pub fn delta(&self, xp: [f64; 2]) -> Result<PlanarValue> {
        let s = self.check_planar("delta", xp, false)?;
        Ok(self.delta_unchecked(xp, s))
    }

    fn delta_unchecked(&self, xp: [f64; 2], s: f64) -> PlanarValue {
        let c = 2.0 * self.kappa * self.m * self.radial_factor(s);
        PlanarValue {
            value: self.epsilon + 2.0 * self.kappa * s.powf(self.m),
            grad: [c * xp[0], c * xp[1]],
        }
    }

    /// Gap width at planar radius `s`, without a domain check.
    pub(crate) fn delta_at_radius(&self, s: f64) -> f64 {
        self.epsilon + 2.0 * self.kappa * s.powf(self.m)
    }

    pub fn contains(&self, x: &NeckPoint) -> bool {
        let s = x.radius();
        if !(s <= self.r) {
            return false;
        }
        let d = self.delta_at_radius(s);
        x.x[2].abs() <= 0.5 * d * (1.0 + MEMBERSHIP_SLACK)
    }

    pub(crate) fn check_point(&self, op: &'static str, x: &NeckPoint) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::domain(op, format!("point {:?} is outside the neck", x.x)))
        }
    }

    /// Rescaled vertical coordinate `x3 / δ(x')` and its gradient.
    pub fn xi(&self, x: &NeckPoint) -> Result<(f64, [f64; 3])> {
        self.check_point("xi", x)?;
        let d = self.delta_unchecked(x.planar(), x.radius());
        let g = x.x[2] / d.value;
        let d2 = d.value * d.value;
        Ok((
            g,
            [-x.x[2] * d.grad[0] / d2, -x.x[2] * d.grad[1] / d2, 1.0 / d.value],
        ))
    }

    /// Point on the lower face of particle 1 above `x'`, the outward normal of
    /// particle 1 there, and the area element.
    pub fn top_surface(&self, xp: [f64; 2]) -> Result<SurfacePoint> {
        self.check_planar("top_surface", xp, true)?;
        let h = self.half_gap(xp)?;
        let area_factor = (1.0 + h.grad[0] * h.grad[0] + h.grad[1] * h.grad[1]).sqrt();
        Ok(SurfacePoint {
            point: [xp[0], xp[1], 0.5 * self.epsilon + h.value],
            normal: [h.grad[0] / area_factor, h.grad[1] / area_factor, -1.0 / area_factor],
            area_factor,
        })
    }

    /// Centre of mass of particle 1.
    pub fn moving_center(&self) -> [f64; 3] {
        [0.0, 0.0, 0.5 * self.epsilon + self.big_r]
    }

    /// Jet pieces of the gap width: `δ` and `∂₁δ, ∂₂δ`, each as a function of
    /// the three coordinates.
    pub(crate) fn delta_jets(&self, x1: Jet, x2: Jet) -> (Jet, [Jet; 2]) {
        let s2 = x1.square() + x2.square();
        let half_m = 0.5 * self.m;
        let delta = s2.powf(half_m) * (2.0 * self.kappa) + self.epsilon;
        let c = 2.0 * self.kappa * self.m;
        let radial = s2.powf(half_m - 1.0);
        (delta, [radial * x1 * c, radial * x2 * c])
    }
}
