//! Explicit singular velocity and pressure fields in the neck.
//!
//! The rigid motion of particle 1 splits into five elementary modes. For each
//! mode `α` the velocity is a Keller-type interpolation across the gap plus a
//! bubble correction,
//!
//! ```text
//! ū(α) = φ_α (1/2 + 𝔊) + (𝔊² − 1/4) 𝓕_α,     𝔊 = x3 / δ(x'),
//! ```
//!
//! paired with a pressure `p̄(α)` that cancels the leading part of `μ ∂₃₃ū`.
//! Everything is evaluated with [`Jet`]s, so the gradients and Hessians used
//! for strain, residuals and test stresses are exact.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GapGeometry, NeckPoint};
use crate::jet::Jet;
use crate::quad::{geometric_breaks, integrate_breaks, QuadOptions};

/// Relative tolerance for the radial pressure integral when `m != 2`.
const PRESSURE_QUAD_TOL: f64 = 1e-12;

/// Translational velocity `U` and angular velocity `ω` of particle 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    #[serde(rename = "U")]
    pub translation: [f64; 3],
    #[serde(rename = "omega")]
    pub rotation: [f64; 3],
}

impl RigidMotion {
    pub fn new(translation: [f64; 3], rotation: [f64; 3]) -> Self {
        RigidMotion {
            translation,
            rotation,
        }
    }

    pub fn translation(u: [f64; 3]) -> Self {
        RigidMotion::new(u, [0.0; 3])
    }

    pub fn rotation(w: [f64; 3]) -> Self {
        RigidMotion::new([0.0; 3], w)
    }

    pub fn scaled(&self, c: f64) -> Self {
        RigidMotion::new(self.translation.map(|v| c * v), self.rotation.map(|v| c * v))
    }

    pub fn is_rotating(&self) -> bool {
        self.rotation.iter().any(|&w| w != 0.0)
    }

    pub fn is_zero(&self) -> bool {
        !self.is_rotating() && self.translation.iter().all(|&u| u == 0.0)
    }

    /// Stacked `(U, ω)`.
    pub fn stacked(&self) -> [f64; 6] {
        let [u1, u2, u3] = self.translation;
        let [w1, w2, w3] = self.rotation;
        [u1, u2, u3, w1, w2, w3]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub mu: f64,
}

impl FluidParams {
    pub fn new(mu: f64) -> Result<Self> {
        if mu > 0.0 && mu.is_finite() {
            Ok(FluidParams { mu })
        } else {
            Err(Error::domain("FluidParams", format!("viscosity must be positive, got {mu}")))
        }
    }
}

/// Constants of the squeeze (`a`) and tilt (`b`) corrections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConstants {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl CorrectionConstants {
    /// The tabulated values; `b2` and `b4` scale like `1/κ`.
    pub fn for_kappa(kappa: f64) -> Self {
        CorrectionConstants {
            a1: 3.0,
            a2: -2.0,
            b1: -12.0 / 5.0,
            b2: 3.0 / (10.0 * kappa),
            b3: 16.0 / 5.0,
            b4: 3.0 / (5.0 * kappa),
        }
    }
}

/// Solves the incompressibility and pressure-matching conditions for the
/// correction constants.
///
/// Squeeze: `1 − (2a₁ + a₂)/4 = 0`, `2a₁ + 3a₂ = 0`.
/// Tilt (m = 2): `1 + (3b₁ + b₃)/4 = 0`, `3b₁ + 3b₃ − 8κb₂ = 0`,
/// `b₁ = −4κb₄`, `b₂ = b₄/2`.
pub fn derive_correction_constants(kappa: f64) -> Result<CorrectionConstants> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::domain("derive_correction_constants", format!("kappa must be positive, got {kappa}")));
    }
    let squeeze = nalgebra::Matrix2::new(2.0, 1.0, 2.0, 3.0);
    let a = squeeze
        .lu()
        .solve(&nalgebra::Vector2::new(4.0, 0.0))
        .ok_or_else(|| Error::SingularSystem("squeeze correction system".into()))?;

    #[rustfmt::skip]
    let tilt = Matrix4::new(
        3.0, 0.0,            1.0, 0.0,
        3.0, -8.0 * kappa,   3.0, 0.0,
        1.0, 0.0,            0.0, 4.0 * kappa,
        0.0, 1.0,            0.0, -0.5,
    );
    let b = tilt
        .lu()
        .solve(&Vector4::new(-4.0, 0.0, 0.0, 0.0))
        .ok_or_else(|| Error::SingularSystem("tilt correction system".into()))?;
    Ok(CorrectionConstants {
        a1: a[0],
        a2: a[1],
        b1: b[0],
        b2: b[1],
        b3: b[2],
        b4: b[3],
    })
}

/// The five elementary modes of the rigid motion of particle 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Mode {
    /// `φ₁ = (U₁ − ω₂R) e₁`
    ShearX = 1,
    /// `φ₂ = (U₂ + ω₁R) e₂`
    ShearY = 2,
    /// `φ₃ = U₃ e₃`
    Squeeze = 3,
    /// `φ₄ = (ω₁x₂ − ω₂x₁) e₃`, only for m = 2.
    Tilt = 4,
    /// In-plane rotation about the apex, only for m = 2.
    Spin = 5,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::ShearX, Mode::ShearY, Mode::Squeeze, Mode::Tilt, Mode::Spin];

    pub fn from_index(alpha: u8) -> Result<Self> {
        match alpha {
            1 => Ok(Mode::ShearX),
            2 => Ok(Mode::ShearY),
            3 => Ok(Mode::Squeeze),
            4 => Ok(Mode::Tilt),
            5 => Ok(Mode::Spin),
            other => Err(Error::ModeOutOfRange(other)),
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn requires_quadratic_profile(self) -> bool {
        matches!(self, Mode::Tilt | Mode::Spin)
    }

    /// Modes defined for a profile exponent `m`.
    pub fn admissible(m: f64) -> &'static [Mode] {
        if m == 2.0 {
            &Mode::ALL
        } else {
            &Mode::ALL[..3]
        }
    }
}

impl From<Mode> for u8 {
    fn from(m: Mode) -> u8 {
        m.index()
    }
}

impl TryFrom<u8> for Mode {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Mode::from_index(v)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Whether the radial part of the squeeze pressure is needed.
///
/// Lower limit of the planar path integrals in the squeeze and tilt test
/// stresses. Any choice that depends only on the other coordinates keeps the
/// tensor divergence free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathAnchor {
    /// `∫₀^{x_k}`. Off the axis, at heights above `δ(0, x_other)/2`, the
    /// path leaves the gap and runs through the continued fields.
    #[default]
    Origin,
    /// `∫_{±√(r² − x_other²)}^{x_k}`, from the lateral boundary on the same
    /// side. The path stays inside the neck since `δ` grows outward.
    NeckEdge,
}

/// Path integrands and residuals only use `∇p̄`, which does not require the
/// quadrature behind the pressure value when `m != 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum PressureEval {
    Full,
    GradientOnly,
    /// Radial squeeze integral already known at this `|x'|`.
    Radial(f64),
}

/// Jets of one mode at one point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ModeJets {
    pub correction: [Jet; 3],
    pub velocity: [Jet; 3],
    pub pressure: Jet,
}

/// Analytic velocity gradient of a mode field at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityGradient {
    /// `grad[(i, j)] = ∂_j ū_i`
    pub grad: Matrix3<f64>,
    pub strain: Matrix3<f64>,
    /// `∂₃₃ ū`
    pub d33: Vector3<f64>,
}

/// `μ∂₃₃ū − ∇p̄` from the fields next to the closed-form right-hand side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub computed: Vector3<f64>,
    pub closed_form: Vector3<f64>,
}

impl Residual {
    pub fn abs_error(&self) -> f64 {
        (self.computed - self.closed_form).amax()
    }
}

/// One mode of the decomposition, bound to a geometry, motion and fluid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeField {
    pub mode: Mode,
    pub geometry: GapGeometry,
    pub motion: RigidMotion,
    pub fluid: FluidParams,
    constants: CorrectionConstants,
}

/// Shared jets of the neck geometry at a point.
struct Kinematics {
    x: [Jet; 3],
    s2: Jet,
    delta: Jet,
    ddelta: [Jet; 2],
    xi: Jet,
    keller: Jet,
    bubble: Jet,
    /// `x'·∇'δ`
    x_dot_grad: Jet,
}

impl Kinematics {
    fn new(geom: &GapGeometry, x: [f64; 3]) -> Self {
        let x = Jet::coordinates(x);
        let s2 = x[0].square() + x[1].square();
        let (delta, ddelta) = geom.delta_jets(x[0], x[1]);
        let xi = x[2] / delta;
        Kinematics {
            x,
            s2,
            delta,
            ddelta,
            xi,
            keller: xi + 0.5,
            bubble: xi.square() - 0.25,
            x_dot_grad: x[0] * ddelta[0] + x[1] * ddelta[1],
        }
    }
}

/// `∫_{r²}^{s²} (ε + 2κ t^(m/2))^(-3) dt` for `s = |x'|`.
pub(crate) fn squeeze_radial_integral(geom: &GapGeometry, s: f64) -> Result<f64> {
    let (eps, kappa, r) = (geom.epsilon, geom.kappa, geom.r);
    if geom.is_quadratic() {
        let outer = eps + 2.0 * kappa * r * r;
        let inner = eps + 2.0 * kappa * s * s;
        return Ok(-(inner.powi(-2) - outer.powi(-2)) / (4.0 * kappa));
    }
    // t = σ², σ = L τ with L the boundary-layer scale.
    let scale = geom.boundary_layer();
    let (lo, hi) = (s / scale, r / scale);
    let mut breaks: Vec<f64> = geometric_breaks(hi).into_iter().filter(|&b| b > lo).collect();
    breaks.insert(0, lo);
    if breaks.len() < 2 {
        return Ok(0.0);
    }
    let m = geom.m;
    let integral = integrate_breaks(
        |tau| Ok(2.0 * tau * (1.0 + tau.powf(m)).powi(-3)),
        &breaks,
        &QuadOptions::relative(PRESSURE_QUAD_TOL),
    )?;
    Ok(-scale * scale * eps.powi(-3) * integral.value)
}

fn vec3(j: &[Jet; 3]) -> Vector3<f64> {
    Vector3::new(j[0].value, j[1].value, j[2].value)
}

impl ModeField {
    pub fn new(mode: Mode, geometry: GapGeometry, motion: RigidMotion, fluid: FluidParams) -> Result<Self> {
        geometry.validate()?;
        if mode.requires_quadratic_profile() && !geometry.is_quadratic() {
            return Err(Error::RequiresQuadraticProfile {
                mode: mode.index(),
                m: geometry.m,
            });
        }
        FluidParams::new(fluid.mu)?;
        Ok(ModeField {
            mode,
            geometry,
            motion,
            fluid,
            constants: CorrectionConstants::for_kappa(geometry.kappa),
        })
    }

    pub fn constants(&self) -> &CorrectionConstants {
        &self.constants
    }

    fn mu(&self) -> f64 {
        self.fluid.mu
    }

    /// The scalar amplitude of shear modes 1 and 2.
    fn shear_amplitude(&self) -> f64 {
        let [u1, u2, _] = self.motion.translation;
        let [w1, w2, _] = self.motion.rotation;
        let big_r = self.geometry.big_r;
        match self.mode {
            Mode::ShearX => u1 - w2 * big_r,
            Mode::ShearY => u2 + w1 * big_r,
            _ => 0.0,
        }
    }

    /// `ω₂x₁ − ω₁x₂`, the signed amplitude of the tilt mode.
    fn tilt_amplitude(&self, k: &Kinematics) -> Jet {
        let [w1, w2, _] = self.motion.rotation;
        k.x[0] * w2 - k.x[1] * w1
    }

    /// Boundary datum `φ_α` as jets.
    fn phi_jets(&self, k: &Kinematics) -> [Jet; 3] {
        let zero = Jet::zero();
        let [w1, w2, w3] = self.motion.rotation;
        match self.mode {
            Mode::ShearX => [Jet::constant(self.shear_amplitude()), zero, zero],
            Mode::ShearY => [zero, Jet::constant(self.shear_amplitude()), zero],
            Mode::Squeeze => [zero, zero, Jet::constant(self.motion.translation[2])],
            Mode::Tilt => [zero, zero, -self.tilt_amplitude(k)],
            Mode::Spin => {
                let lifted = k.x[2] - 0.5 * self.geometry.epsilon;
                [lifted * w2 - k.x[1] * w3, k.x[0] * w3 - lifted * w1, zero]
            }
        }
    }

    /// Correction field `𝓕_α` as jets, given `φ_α`.
    fn correction_jets(&self, k: &Kinematics, phi: &[Jet; 3]) -> [Jet; 3] {
        let zero = Jet::zero();
        let c = &self.constants;
        match self.mode {
            Mode::ShearX => [zero, zero, k.ddelta[0] * (0.5 * self.shear_amplitude())],
            Mode::ShearY => [zero, zero, k.ddelta[1] * (0.5 * self.shear_amplitude())],
            Mode::Squeeze => {
                let u3 = self.motion.translation[2];
                let inv = k.delta.recip();
                [
                    k.x[0] * inv * (c.a1 * u3),
                    k.x[1] * inv * (c.a1 * u3),
                    k.xi * (k.x_dot_grad * inv * c.a1 + c.a2) * u3,
                ]
            }
            Mode::Tilt => {
                let [w1, w2, _] = self.motion.rotation;
                let q = self.tilt_amplitude(k);
                let qd = q / k.delta * c.b1;
                [
                    k.x[0] * qd + c.b2 * w2,
                    k.x[1] * qd - c.b2 * w1,
                    q * (k.x_dot_grad / k.delta * c.b1 + c.b3) * k.xi,
                ]
            }
            Mode::Spin => {
                let [w1, w2, _] = self.motion.rotation;
                let twist = k.ddelta[1] * w1 - k.ddelta[0] * w2;
                let vertical = (phi[0] * k.ddelta[0] + phi[1] * k.ddelta[1]) * 0.5 + k.delta * twist * 0.25;
                [zero, zero, vertical]
            }
        }
    }

    fn pressure_jet(&self, k: &Kinematics, eval: PressureEval) -> Result<Jet> {
        let mu = self.mu();
        let c = &self.constants;
        Ok(match self.mode {
            Mode::ShearX | Mode::ShearY => {
                let i = if self.mode == Mode::ShearX { 0 } else { 1 };
                k.x[2] * k.ddelta[i] / k.delta.square() * (mu * self.shear_amplitude())
            }
            Mode::Squeeze => {
                let u3 = self.motion.translation[2];
                let local = k.x[2].square() * 3.0 / k.delta.powi(3) * (k.x_dot_grad / k.delta * c.a1 + c.a2);
                let value = match eval {
                    PressureEval::Full => squeeze_radial_integral(&self.geometry, k.s2.value.sqrt())?,
                    PressureEval::GradientOnly => 0.0,
                    PressureEval::Radial(v) => v,
                };
                let radial = k.s2.compose_with_slope(value, &k.delta.powi(-3));
                (local + radial * c.a1) * (mu * u3)
            }
            Mode::Tilt => {
                let q = self.tilt_amplitude(k);
                let bracket = k.x[2].square() * 3.0 / k.delta * (k.x_dot_grad / k.delta * c.b1 + c.b3) + c.b4;
                q / k.delta.square() * bracket * mu
            }
            Mode::Spin => Jet::zero(),
        })
    }

    /// Jets without a domain check; used on quadrature paths that may leave
    /// the closed neck slightly.
    pub(crate) fn jets(&self, x: [f64; 3], eval: PressureEval) -> Result<ModeJets> {
        let k = Kinematics::new(&self.geometry, x);
        let phi = self.phi_jets(&k);
        let correction = self.correction_jets(&k, &phi);
        let mut velocity = [Jet::zero(); 3];
        for i in 0..3 {
            velocity[i] = phi[i] * k.keller + k.bubble * correction[i];
        }
        let pressure = self.pressure_jet(&k, eval)?;
        Ok(ModeJets {
            correction,
            velocity,
            pressure,
        })
    }

    fn checked_jets(&self, op: &'static str, x: &NeckPoint, eval: PressureEval) -> Result<ModeJets> {
        self.geometry.check_point(op, x)?;
        self.jets(x.x, eval)
    }

    /// Boundary datum `φ_α` at `x`.
    pub fn phi(&self, x: &NeckPoint) -> Result<Vector3<f64>> {
        self.geometry.check_point("phi", x)?;
        let k = Kinematics::new(&self.geometry, x.x);
        Ok(vec3(&self.phi_jets(&k)))
    }

    /// Correction field `𝓕_α` at `x`.
    pub fn correction(&self, x: &NeckPoint) -> Result<Vector3<f64>> {
        let j = self.checked_jets("correction", x, PressureEval::GradientOnly)?;
        Ok(vec3(&j.correction))
    }

    pub fn velocity(&self, x: &NeckPoint) -> Result<Vector3<f64>> {
        let j = self.checked_jets("velocity", x, PressureEval::GradientOnly)?;
        Ok(vec3(&j.velocity))
    }

    pub fn pressure(&self, x: &NeckPoint) -> Result<f64> {
        Ok(self.checked_jets("pressure", x, PressureEval::Full)?.pressure.value)
    }

    pub fn velocity_gradient(&self, x: &NeckPoint) -> Result<VelocityGradient> {
        let j = self.checked_jets("velocity_gradient", x, PressureEval::GradientOnly)?;
        Ok(gradient_from_jets(&j.velocity))
    }

    pub fn divergence(&self, x: &NeckPoint) -> Result<f64> {
        let j = self.checked_jets("divergence", x, PressureEval::GradientOnly)?;
        Ok(j.velocity[0].grad[0] + j.velocity[1].grad[1] + j.velocity[2].grad[2])
    }

    /// `μ∂₃₃ū − ∇p̄` next to its closed-form right-hand side.
    pub fn residual33(&self, x: &NeckPoint) -> Result<Residual> {
        let j = self.checked_jets("residual33", x, PressureEval::GradientOnly)?;
        let mu = self.mu();
        let computed = Vector3::from_fn(|i, _| mu * j.velocity[i].hess[2][2] - j.pressure.grad[i]);
        Ok(Residual {
            computed,
            closed_form: self.residual_closed_form(x.x),
        })
    }

    fn residual_closed_form(&self, x: [f64; 3]) -> Vector3<f64> {
        let k = Kinematics::new(&self.geometry, x);
        let mu = self.mu();
        let c = &self.constants;
        let x3 = x[2];
        // Planar rows are -μ x3^p ∂_i(q) for a mode-dependent q; the vertical row
        // vanishes except for the spin mode.
        let planar = |q: Jet, power: i32, scale: f64| -> Vector3<f64> {
            let w = scale * mu * x3.powi(power);
            Vector3::new(-w * q.grad[0], -w * q.grad[1], 0.0)
        };
        match self.mode {
            Mode::ShearX | Mode::ShearY => {
                let i = if self.mode == Mode::ShearX { 0 } else { 1 };
                planar(k.ddelta[i] / k.delta.square(), 1, self.shear_amplitude())
            }
            Mode::Squeeze => {
                let q = (k.x_dot_grad / k.delta * c.a1 + c.a2) / k.delta.powi(3);
                planar(q, 2, 3.0 * self.motion.translation[2])
            }
            Mode::Tilt => {
                let q = self.tilt_amplitude(&k) / k.delta.powi(3) * (k.x_dot_grad / k.delta * c.b1 + c.b3);
                planar(q, 2, 3.0)
            }
            Mode::Spin => {
                let [w1, w2, w3] = self.motion.rotation;
                let (d, d1, d2) = (k.delta.value, k.ddelta[0].value, k.ddelta[1].value);
                let lifted = x3 - 0.5 * self.geometry.epsilon;
                let phi1 = w2 * lifted - w3 * x[1];
                let phi2 = -w1 * lifted + w3 * x[0];
                let vertical = mu / (d * d) * (phi1 * d1 + phi2 * d2) + mu / (2.0 * d) * (w1 * d2 - w2 * d1);
                Vector3::new(0.0, 0.0, vertical)
            }
        }
    }

    /// Cauchy stress `2μ e(ū) − p̄ 𝕀`.
    pub fn stress(&self, x: &NeckPoint) -> Result<Matrix3<f64>> {
        let j = self.checked_jets("stress", x, PressureEval::Full)?;
        Ok(stress_from_jets(&j, self.mu()))
    }

    /// Divergence-free symmetric test stress `S̄(α)` used in the dual energy.
    ///
    /// For the squeeze and tilt modes the diagonal entries carry path
    /// integrals `∫₀^{x_k} (μΔū_k − ∂_k p̄) dx_k` along the k-th coordinate,
    /// evaluated to relative tolerance `tol`.
    pub fn test_stress(&self, x: &NeckPoint, tol: f64) -> Result<Matrix3<f64>> {
        self.test_stress_anchored(x, tol, PathAnchor::Origin)
    }

    /// [`ModeField::test_stress`] with a chosen lower limit for the planar
    /// path integrals.
    pub fn test_stress_anchored(&self, x: &NeckPoint, tol: f64, anchor: PathAnchor) -> Result<Matrix3<f64>> {
        self.geometry.check_point("test_stress", x)?;
        self.test_stress_unchecked(x.x, tol, anchor)
    }

    pub(crate) fn test_stress_unchecked(&self, x: [f64; 3], tol: f64, anchor: PathAnchor) -> Result<Matrix3<f64>> {
        let mu = self.mu();
        match self.mode {
            Mode::Spin => Ok(Matrix3::zeros()),
            Mode::ShearX | Mode::ShearY => {
                let (d, grad) = self.planar_delta(x);
                let i = if self.mode == Mode::ShearX { 0 } else { 1 };
                let c = mu * self.shear_amplitude();
                let mut s = Matrix3::zeros();
                s[(i, 2)] = c / d;
                s[(2, i)] = c / d;
                // -x3 ∂_i(1/δ)
                s[(2, 2)] = c * x[2] * grad[i] / (d * d);
                Ok(s)
            }
            Mode::Squeeze | Mode::Tilt => {
                let j = self.jets(x, PressureEval::Full)?;
                let scale = self.stress_scale(&j);
                let planar = [
                    self.path_integral(x, 0, tol, scale, anchor)?,
                    self.path_integral(x, 1, tol, scale, anchor)?,
                ];
                self.test_stress_with_paths(x, &j, planar, tol)
            }
        }
    }

    /// Test stress of the squeeze or tilt mode from jets carrying the
    /// pressure value and the two planar path integrals; the vertical one is
    /// computed here.
    pub(crate) fn test_stress_with_paths(&self, x: [f64; 3], j: &ModeJets, planar: [f64; 2], tol: f64) -> Result<Matrix3<f64>> {
        match self.mode {
            Mode::Squeeze | Mode::Tilt => {}
            _ => return self.test_stress_unchecked(x, tol, PathAnchor::Origin),
        }
        let mu = self.mu();
        let vertical = self.path_integral(x, 2, tol, self.stress_scale(j), PathAnchor::Origin)?;
        let paths = [planar[0], planar[1], vertical];
        let mut s = Matrix3::zeros();
        for k in 0..3 {
            s[(k, k)] = 2.0 * mu * j.velocity[k].grad[k] - j.pressure.value - paths[k];
            for l in (k + 1)..3 {
                let v = mu * (j.velocity[k].grad[l] + j.velocity[l].grad[k]);
                s[(k, l)] = v;
                s[(l, k)] = v;
            }
        }
        Ok(s)
    }

    fn planar_delta(&self, x: [f64; 3]) -> (f64, [f64; 2]) {
        let k = Kinematics::new(&self.geometry, x);
        (k.delta.value, [k.ddelta[0].value, k.ddelta[1].value])
    }

    /// `μΔū_k − ∂_k p̄` at `x`.
    pub(crate) fn momentum_defect(&self, x: [f64; 3], k: usize) -> Result<f64> {
        let j = self.jets(x, PressureEval::GradientOnly)?;
        Ok(self.mu() * j.velocity[k].laplacian() - j.pressure.grad[k])
    }

    /// Size of the non-path entries of the test stress at a point, used as
    /// the absolute accuracy scale of the path integrals: where the defect
    /// is roundoff only, a relative target cannot be met.
    pub(crate) fn stress_scale(&self, j: &ModeJets) -> f64 {
        let grad = j.velocity.iter().flat_map(|u| u.grad).fold(0.0_f64, |m, v| m.max(v.abs()));
        j.pressure.value.abs() + 2.0 * self.mu() * grad
    }

    /// `∫_{a_k}^{x_k} (μΔū_k − ∂_k p̄) dx_k` with the other coordinates
    /// frozen, to relative tolerance `tol` or absolute `tol · scale`. The
    /// vertical path always starts at `a₃ = 0`; see [`PathAnchor`] for the
    /// planar ones.
    pub(crate) fn path_integral(&self, x: [f64; 3], k: usize, tol: f64, scale: f64, anchor: PathAnchor) -> Result<f64> {
        let layer = self.geometry.boundary_layer();
        let (breaks, sign) = match (k, anchor) {
            (2, _) => (vec![0.0, x[2]], 1.0),
            (_, PathAnchor::Origin) => {
                // the path crosses the boundary layer near the axis
                let b = geometric_breaks(x[k].abs() / layer);
                (b.into_iter().map(|t| t * layer * x[k].signum()).collect(), 1.0)
            }
            (_, PathAnchor::NeckEdge) => {
                let dir = if x[k] < 0.0 { -1.0 } else { 1.0 };
                let r = self.geometry.r;
                let end = (r * r - x[1 - k] * x[1 - k]).max(0.0).sqrt();
                let start = x[k].abs();
                let mut b = vec![start];
                b.extend(
                    geometric_breaks(end / layer)
                        .into_iter()
                        .map(|t| t * layer)
                        .filter(|&t| t > start && t < end),
                );
                b.push(end);
                // ∫_{edge}^{x_k} = −∫_{x_k}^{edge}
                (b.into_iter().map(|t| dir * t).collect(), -1.0)
            }
        };
        if breaks.first() == breaks.last() {
            return Ok(0.0);
        }
        let opts = QuadOptions {
            abs_tol: tol * scale,
            ..QuadOptions::relative(tol)
        };
        let r = integrate_breaks(
            |t| {
                let mut y = x;
                y[k] = t;
                self.momentum_defect(y, k)
            },
            &breaks,
            &opts,
        )?;
        Ok(sign * r.value)
    }
}

pub(crate) fn gradient_from_jets(u: &[Jet; 3]) -> VelocityGradient {
    let grad = Matrix3::from_fn(|i, j| u[i].grad[j]);
    VelocityGradient {
        grad,
        strain: (grad + grad.transpose()) * 0.5,
        d33: Vector3::new(u[0].hess[2][2], u[1].hess[2][2], u[2].hess[2][2]),
    }
}

pub(crate) fn stress_from_jets(j: &ModeJets, mu: f64) -> Matrix3<f64> {
    let g = gradient_from_jets(&j.velocity);
    g.strain * (2.0 * mu) - Matrix3::identity() * j.pressure.value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geom(m: f64, kappa: f64, eps: f64) -> GapGeometry {
        GapGeometry::new(m, kappa, eps, 0.5, 1.0).unwrap()
    }

    fn field(mode: Mode, g: GapGeometry, motion: RigidMotion) -> ModeField {
        ModeField::new(mode, g, motion, FluidParams { mu: 1.3 }).unwrap()
    }

    fn generic_motion() -> RigidMotion {
        RigidMotion::new([0.7, -1.1, 1.9], [0.4, -0.8, 1.3])
    }

    /// A point in the neck from unit-square samples.
    fn neck_point(g: &GapGeometry, rho: f64, theta: f64, height: f64) -> NeckPoint {
        let s = g.r * rho;
        let d = g.delta_at_radius(s);
        NeckPoint::new(s * theta.cos(), s * theta.sin(), d * (height - 0.5))
    }

    fn modes_for(m: f64) -> &'static [Mode] {
        Mode::admissible(m)
    }

    #[test]
    fn constants_solve_to_table() {
        for kappa in [0.25, 0.5, 1.0, 3.0] {
            let d = derive_correction_constants(kappa).unwrap();
            let t = CorrectionConstants::for_kappa(kappa);
            for (a, b) in [
                (d.a1, t.a1),
                (d.a2, t.a2),
                (d.b1, t.b1),
                (d.b2, t.b2),
                (d.b3, t.b3),
                (d.b4, t.b4),
            ] {
                assert_relative_eq!(a, b, max_relative = 1e-14);
            }
        }
        let d = derive_correction_constants(1.0).unwrap();
        assert_relative_eq!(d.b2, 0.3, max_relative = 1e-14);
        assert_relative_eq!(d.b4, 0.6, max_relative = 1e-14);
        assert!(derive_correction_constants(0.0).is_err());
    }

    #[test]
    fn phi_examples() {
        let g = geom(2.0, 0.5, 0.01);
        let x = NeckPoint::new(0.0, 0.1, 0.0);
        let f = field(Mode::Squeeze, g, RigidMotion::translation([0.0, 0.0, 2.0]));
        assert_eq!(f.phi(&x).unwrap(), Vector3::new(0.0, 0.0, 2.0));
        let f = field(Mode::Tilt, g, RigidMotion::rotation([1.0, 0.0, 0.0]));
        assert_relative_eq!(f.phi(&x).unwrap()[2], 0.1, max_relative = 1e-15);
        let f = field(Mode::ShearX, g, RigidMotion::new([1.0, 0.0, 0.0], [0.0, 0.5, 0.0]));
        assert_eq!(f.phi(&x).unwrap(), Vector3::new(0.5, 0.0, 0.0));
        assert!(matches!(Mode::from_index(6), Err(Error::ModeOutOfRange(6))));
    }

    #[test]
    fn correction_examples() {
        let g = geom(2.0, 0.5, 0.01);
        let f = field(Mode::Squeeze, g, RigidMotion::translation([0.0, 0.0, 1.0]));
        assert_eq!(f.correction(&NeckPoint::new(0.0, 0.0, 0.0)).unwrap(), Vector3::zeros());

        let f = field(Mode::ShearX, g, RigidMotion::new([1.5, 0.0, 0.0], [0.0, 0.5, 0.0]));
        let c = f.correction(&NeckPoint::new(0.1, 0.0, 0.0)).unwrap();
        assert_relative_eq!(c[2], 0.1, max_relative = 1e-14);

        let f = field(Mode::Tilt, g, RigidMotion::rotation([0.0, 1.0, 0.0]));
        let c = f.correction(&NeckPoint::new(0.1, 0.0, 0.0)).unwrap();
        assert_relative_eq!(c[0], -0.6, max_relative = 1e-13);
        assert_eq!(c[1], 0.0);
        assert_eq!(c[2], 0.0);
    }

    #[test]
    fn modes_four_and_five_need_quadratic_profile() {
        let g = geom(3.0, 1.0, 1e-3);
        for mode in [Mode::Tilt, Mode::Spin] {
            let err = ModeField::new(mode, g, generic_motion(), FluidParams { mu: 1.0 }).unwrap_err();
            assert!(matches!(err, Error::RequiresQuadraticProfile { .. }));
        }
        assert!(ModeField::new(Mode::Squeeze, g, generic_motion(), FluidParams { mu: 0.0 }).is_err());
    }

    #[test]
    fn velocity_and_pressure_examples() {
        let g = geom(2.0, 0.5, 0.01);
        let f = field(Mode::Squeeze, g, RigidMotion::translation([0.0, 0.0, 1.0]));
        let u = f.velocity(&NeckPoint::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(u, Vector3::new(0.0, 0.0, 0.5));

        let f = ModeField::new(Mode::ShearX, g, generic_motion(), FluidParams { mu: 1.0 }).unwrap();
        assert_eq!(f.pressure(&NeckPoint::new(0.2, 0.1, 0.0)).unwrap(), 0.0);
        let f = field(Mode::Spin, g, generic_motion());
        assert_eq!(f.pressure(&NeckPoint::new(0.2, 0.1, 0.01)).unwrap(), 0.0);

        let (mu, u3, eps, kappa, r) = (1.3, 0.8, 0.01, 0.5, 0.5);
        let f = ModeField::new(
            Mode::Squeeze,
            g,
            RigidMotion::translation([0.0, 0.0, u3]),
            FluidParams { mu },
        )
        .unwrap();
        let x3 = 0.003;
        let p = f.pressure(&NeckPoint::new(0.0, 0.0, x3)).unwrap();
        let outer: f64 = eps + 2.0 * kappa * r * r;
        let expected = mu * u3 * (-6.0 * x3 * x3 / eps.powi(3) - 3.0 / (4.0 * kappa) * (eps.powi(-2) - outer.powi(-2)));
        assert_relative_eq!(p, expected, max_relative = 1e-13);
    }

    #[test]
    fn squeeze_pressure_vanishes_at_neck_edge_for_any_m() {
        for m in [2.0, 3.0, 4.5] {
            let g = geom(m, 1.0, 1e-3);
            let f = field(Mode::Squeeze, g, RigidMotion::translation([0.0, 0.0, 1.0]));
            let p = f.pressure(&NeckPoint::new(g.r, 0.0, 0.0)).unwrap();
            assert!(p.abs() < 1e-12, "m = {m}: {p}");
        }
    }

    #[test]
    fn radial_pressure_quadrature_matches_closed_form_at_m_two() {
        let g = geom(2.0, 0.7, 1e-4);
        let g_near = GapGeometry { m: 2.0 + 1e-13, ..g };
        for s in [0.0, 1e-3, 0.05, 0.3] {
            let closed = squeeze_radial_integral(&g, s).unwrap();
            let quad = squeeze_radial_integral(&g_near, s).unwrap();
            assert_relative_eq!(quad, closed, max_relative = 1e-9);
        }
    }

    #[test]
    fn stress_and_gradient_examples() {
        let g = geom(2.0, 0.5, 0.01);
        let f = ModeField::new(Mode::ShearX, g, RigidMotion::translation([1.0, 0.0, 0.0]), FluidParams { mu: 1.0 }).unwrap();
        let origin = NeckPoint::new(0.0, 0.0, 0.0);
        let s = f.stress(&origin).unwrap();
        assert_relative_eq!(s[(0, 2)], 99.75, max_relative = 1e-13);
        assert_eq!(s, s.transpose());
        let grad = f.velocity_gradient(&origin).unwrap();
        assert_relative_eq!(grad.grad[(0, 2)], 100.0, max_relative = 1e-14);

        let zero = field(Mode::Tilt, g, RigidMotion::default());
        let x = NeckPoint::new(0.1, -0.2, 0.001);
        assert_eq!(zero.stress(&x).unwrap(), Matrix3::zeros());
        assert_eq!(zero.divergence(&x).unwrap(), 0.0);
    }

    #[test]
    fn residual_examples() {
        let g = geom(2.0, 0.5, 0.01);
        let x = NeckPoint::new(0.12, -0.07, 0.0);
        let f = field(Mode::ShearX, g, generic_motion());
        let r = f.residual33(&x).unwrap();
        assert_eq!(r.closed_form[0], 0.0);
        assert_eq!(r.closed_form[1], 0.0);

        let f = field(Mode::Squeeze, g, generic_motion());
        let r = f.residual33(&NeckPoint::new(0.12, -0.07, 0.004)).unwrap();
        assert!(r.computed[2].abs() < 1e-9 * r.computed.amax());

        let f = field(Mode::Spin, g, RigidMotion::translation([1.0, 2.0, 3.0]));
        assert_eq!(f.residual33(&x).unwrap().closed_form, Vector3::zeros());
    }

    #[test]
    fn outside_points_are_rejected() {
        let g = geom(2.0, 0.5, 0.01);
        let f = field(Mode::Squeeze, g, generic_motion());
        assert!(f.velocity(&NeckPoint::new(0.6, 0.0, 0.0)).is_err());
        assert!(f.velocity(&NeckPoint::new(0.0, 0.0, 0.006)).is_err());
        assert!(f.test_stress(&NeckPoint::new(0.0, 0.0, 0.006), 1e-10).is_err());
    }

    #[test]
    fn test_stress_shapes() {
        let g = geom(2.0, 0.5, 0.01);
        let x = NeckPoint::new(0.1, 0.05, 0.004);
        let f = field(Mode::Spin, g, generic_motion());
        assert_eq!(f.test_stress(&x, 1e-10).unwrap(), Matrix3::zeros());

        let f = field(Mode::ShearX, g, generic_motion());
        let s = f.test_stress(&x, 1e-10).unwrap();
        let d = g.delta(x.planar()).unwrap().value;
        let c = 1.3 * (0.7 + 0.8);
        assert_relative_eq!(s[(0, 2)], c / d, max_relative = 1e-14);
        assert_eq!(s[(0, 0)], 0.0);

        for mode in [Mode::Squeeze, Mode::Tilt] {
            let s = field(mode, g, generic_motion()).test_stress(&x, 1e-12).unwrap();
            assert_eq!(s, s.transpose());
        }
    }

    fn velocity_fd(f: &ModeField, x: [f64; 3], h: f64) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| {
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let up = f.jets(xp, PressureEval::GradientOnly).unwrap().velocity[i].value;
            let um = f.jets(xm, PressureEval::GradientOnly).unwrap().velocity[i].value;
            (up - um) / (2.0 * h)
        })
    }

    /// Divergence of the test stress by fourth-order central differences.
    fn test_stress_divergence(f: &ModeField, x: [f64; 3], h: [f64; 3], anchor: PathAnchor) -> Vector3<f64> {
        let stencil = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
        let mut div = Vector3::zeros();
        for j in 0..3 {
            for &(k, w) in &stencil {
                let mut y = x;
                y[j] += k * h[j];
                let s = f.test_stress_unchecked(y, 1e-13, anchor).unwrap();
                for i in 0..3 {
                    div[i] += w * s[(i, j)] / h[j];
                }
            }
        }
        div
    }

    #[test]
    fn test_stress_is_divergence_free() {
        let g = geom(2.0, 0.5, 0.02);
        let mu = 1.3;
        for mode in Mode::ALL {
            let f = field(mode, g, generic_motion());
            for &(rho, theta, height) in &[(0.3, 0.4, 0.3), (0.7, 2.5, 0.8), (0.1, 4.0, 0.55)] {
                let x = neck_point(&g, rho, theta, height);
                let d = g.delta(x.planar()).unwrap().value;
                let h = [1e-3, 1e-3, d * 1e-2];
                let scale = mu * generic_motion().stacked().iter().fold(0.0_f64, |m, v| m.max(v.abs())) / (d * d);
                for anchor in [PathAnchor::Origin, PathAnchor::NeckEdge] {
                    let div = test_stress_divergence(&f, x.x, h, anchor);
                    assert!(
                        div.amax() <= 1e-6 * scale,
                        "mode {mode}, {anchor:?}: |div S| = {} vs scale {scale}",
                        div.amax()
                    );
                }
            }
        }
    }

    #[test]
    fn spin_mode_is_not_divergence_free() {
        // Measured behaviour of the spin correction: its divergence is
        // (ω₁∂₂δ − ω₂∂₁δ)(𝔊 − 𝔊² + 1/4)/2, zero only for rotation about e₃.
        let g = geom(2.0, 0.5, 0.01);
        let f = field(Mode::Spin, g, generic_motion());
        let x = NeckPoint::new(0.1, 0.2, 0.002);
        let d = g.delta(x.planar()).unwrap();
        let [w1, w2, _] = generic_motion().rotation;
        let xi = x.x[2] / d.value;
        let expected = 0.5 * (w1 * d.grad[1] - w2 * d.grad[0]) * (xi - xi * xi + 0.25);
        assert_relative_eq!(f.divergence(&x).unwrap(), expected, max_relative = 1e-10);

        let spin_only = field(Mode::Spin, g, RigidMotion::rotation([0.0, 0.0, 1.0]));
        assert!(spin_only.divergence(&x).unwrap().abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn boundary_values_are_exact(
            m in prop::sample::select(vec![2.0, 3.0, 4.0]),
            rho in 0.0..0.999f64,
            theta in 0.0..std::f64::consts::TAU,
            alpha in 0usize..5,
        ) {
            let g = geom(m, 0.8, 1e-3);
            let modes = modes_for(m);
            let f = field(modes[alpha % modes.len()], g, generic_motion());
            let top = neck_point(&g, rho, theta, 1.0);
            let bottom = neck_point(&g, rho, theta, 0.0);
            let phi = f.phi(&top).unwrap();
            let u = f.velocity(&top).unwrap();
            let scale = phi.amax().max(f.correction(&top).unwrap().amax()).max(1.0);
            prop_assert!((u - phi).amax() <= 8.0 * f64::EPSILON * scale);
            let scale = f.phi(&bottom).unwrap().amax().max(f.correction(&bottom).unwrap().amax()).max(1.0);
            prop_assert!(f.velocity(&bottom).unwrap().amax() <= 8.0 * f64::EPSILON * scale);
        }

        #[test]
        fn incompressible_except_spin(
            m in prop::sample::select(vec![2.0, 3.0, 4.0]),
            rho in 0.0..1.0f64,
            theta in 0.0..std::f64::consts::TAU,
            height in 0.0..1.0f64,
            alpha in 0usize..4,
        ) {
            let g = geom(m, 0.8, 1e-4);
            let modes = modes_for(m);
            let mode = modes[alpha % modes.len()];
            prop_assume!(mode != Mode::Spin);
            let f = field(mode, g, generic_motion());
            let x = neck_point(&g, rho, theta, height);
            let grad = f.velocity_gradient(&x).unwrap().grad;
            let div = f.divergence(&x).unwrap();
            prop_assert!(div.abs() <= 1e-12 * grad.amax().max(1.0), "div = {div}");
        }

        #[test]
        fn residual_identity_holds_for_first_four_modes(
            m in prop::sample::select(vec![2.0, 2.5, 3.0, 4.0]),
            rho in 0.0..1.0f64,
            theta in 0.0..std::f64::consts::TAU,
            height in 0.0..1.0f64,
            alpha in 0usize..4,
        ) {
            let g = geom(m, 0.6, 1e-3);
            let modes = modes_for(m);
            let mode = modes[alpha % modes.len()];
            prop_assume!(mode != Mode::Spin);
            let f = field(mode, g, generic_motion());
            let r = f.residual33(&neck_point(&g, rho, theta, height)).unwrap();
            let scale = r.computed.amax().max(r.closed_form.amax()).max(1e-300);
            prop_assert!(r.abs_error() <= 1e-8 * scale, "{:?}", r);
        }

        #[test]
        fn gradient_matches_finite_differences(
            rho in 0.05..0.95f64,
            theta in 0.0..std::f64::consts::TAU,
            height in 0.1..0.9f64,
            alpha in 0usize..5,
        ) {
            let g = geom(2.0, 0.5, 0.05);
            let f = field(Mode::ALL[alpha], g, generic_motion());
            let x = neck_point(&g, rho, theta, height);
            let exact = f.velocity_gradient(&x).unwrap().grad;
            let fd = velocity_fd(&f, x.x, 1e-6);
            prop_assert!((exact - fd).amax() <= 1e-6 * exact.amax().max(1.0));
        }

        #[test]
        fn pressure_gradient_matches_finite_differences(
            m in prop::sample::select(vec![2.0, 3.0]),
            rho in 0.1..0.9f64,
            theta in 0.0..std::f64::consts::TAU,
            height in 0.1..0.9f64,
        ) {
            let g = geom(m, 1.0, 0.02);
            let f = field(Mode::Squeeze, g, generic_motion());
            let x = neck_point(&g, rho, theta, height);
            let exact = f.jets(x.x, PressureEval::Full).unwrap().pressure.grad;
            let h = 1e-6;
            for k in 0..3 {
                let (mut xp, mut xm) = (x.x, x.x);
                xp[k] += h;
                xm[k] -= h;
                let fd = (f.pressure(&NeckPoint { x: xp }).unwrap() - f.pressure(&NeckPoint { x: xm }).unwrap()) / (2.0 * h);
                prop_assert!((exact[k] - fd).abs() <= 1e-6 * exact.iter().fold(1.0_f64, |a, v| a.max(v.abs())));
            }
        }

        #[test]
        fn fields_are_linear_in_motion(
            c in -5.0..5.0f64,
            rho in 0.0..1.0f64,
            theta in 0.0..std::f64::consts::TAU,
            height in 0.0..1.0f64,
            alpha in 0usize..5,
        ) {
            let g = geom(2.0, 0.5, 1e-3);
            let mode = Mode::ALL[alpha];
            let f = field(mode, g, generic_motion());
            let fc = field(mode, g, generic_motion().scaled(c));
            let x = neck_point(&g, rho, theta, height);
            let tol = 1e-14;
            let (u, uc) = (f.velocity(&x).unwrap(), fc.velocity(&x).unwrap());
            prop_assert!((uc - u * c).amax() <= tol * (u * c).amax().max(1e-300));
            let (p, pc) = (f.pressure(&x).unwrap(), fc.pressure(&x).unwrap());
            prop_assert!((pc - c * p).abs() <= tol * (c * p).abs().max(1e-300));
            let (s, sc) = (f.stress(&x).unwrap(), fc.stress(&x).unwrap());
            prop_assert!((sc - s * c).amax() <= tol * (s * c).amax().max(1e-300));
        }
    }
}
