//! Leading-order force and torque on the moving particle.
//!
//! Each mode contributes `Γ_ij ρ_ij(ε)` multiples of fixed vectors; the
//! remainders are bounded but unknown and appear only as flagged entries in
//! the breakdown.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FluidParams, Mode, ModeField, RigidMotion};
use crate::geometry::GapGeometry;
use crate::specfun::{gamma_coeff, rate, CoeffIndex};

pub type Vector = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateTag {
    #[serde(rename = "rho12")]
    Rho12,
    #[serde(rename = "rho34")]
    Rho34,
    /// Bounded remainder; never valued.
    #[serde(rename = "O1")]
    O1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub mode: Mode,
    pub rate: RateTag,
    pub force: Vector,
    pub torque: Vector,
    /// Set on remainder entries, whose vectors are placeholders equal to zero.
    pub unmodeled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceTorque {
    #[serde(rename = "F")]
    pub force: Vector,
    #[serde(rename = "T")]
    pub torque: Vector,
    pub breakdown: Vec<Contribution>,
}

impl ForceTorque {
    fn from_breakdown(breakdown: Vec<Contribution>) -> Self {
        let mut force = [0.0; 3];
        let mut torque = [0.0; 3];
        for c in &breakdown {
            for i in 0..3 {
                force[i] += c.force[i];
                torque[i] += c.torque[i];
            }
        }
        ForceTorque {
            force,
            torque,
            breakdown,
        }
    }

    pub fn zero() -> Self {
        ForceTorque::from_breakdown(Vec::new())
    }

    /// Sum of the entries with a given rate tag.
    pub fn rate_part(&self, tag: RateTag) -> (Vector, Vector) {
        let mut f = [0.0; 3];
        let mut t = [0.0; 3];
        for c in self.breakdown.iter().filter(|c| c.rate == tag) {
            for i in 0..3 {
                f[i] += c.force[i];
                t[i] += c.torque[i];
            }
        }
        (f, t)
    }
}

fn scaled(e: Vector, c: f64) -> Vector {
    e.map(|v| c * v)
}

const E1: Vector = [1.0, 0.0, 0.0];
const E2: Vector = [0.0, 1.0, 0.0];
const E3: Vector = [0.0, 0.0, 1.0];

/// `Γ_ij ρ_ij(ε)` for the geometry.
pub fn rate_coefficient(idx: CoeffIndex, geom: &GapGeometry) -> Result<f64> {
    Ok(gamma_coeff(idx, geom.m, geom.kappa)? * rate(idx, geom.m, geom.epsilon)?)
}

/// Leading terms of the force and torque produced by one mode.
pub fn mode_force_torque(field: &ModeField) -> Result<ForceTorque> {
    let geom = &field.geometry;
    let mu = field.fluid.mu;
    let big_r = geom.big_r;
    let [u1, u2, u3] = field.motion.translation;
    let [w1, w2, _] = field.motion.rotation;
    let g12 = rate_coefficient(CoeffIndex::I12, geom)?;
    let entry = |rate, force, torque| Contribution {
        mode: field.mode,
        rate,
        force,
        torque,
        unmodeled: false,
    };
    let mut breakdown = match field.mode {
        Mode::ShearX => {
            let c = 2.0 * PI * mu * (u1 - w2 * big_r) * g12;
            vec![entry(RateTag::Rho12, scaled(E1, -c), scaled(E2, big_r * c))]
        }
        Mode::ShearY => {
            let c = 2.0 * PI * mu * (u2 + w1 * big_r) * g12;
            vec![entry(RateTag::Rho12, scaled(E2, -c), scaled(E1, -big_r * c))]
        }
        Mode::Squeeze => {
            let g34 = rate_coefficient(CoeffIndex::I34, geom)?;
            vec![
                entry(RateTag::Rho12, scaled(E3, -2.0 * PI * mu * u3 * g12), [0.0; 3]),
                entry(RateTag::Rho34, scaled(E3, -3.0 * PI * mu * u3 * g34), [0.0; 3]),
            ]
        }
        Mode::Tilt => {
            let c = 3.0 * PI * mu * g12 / (5.0 * geom.kappa);
            vec![entry(RateTag::Rho12, [-c * w2, c * w1, 0.0], [0.0; 3])]
        }
        Mode::Spin => Vec::new(),
    };
    breakdown.push(Contribution {
        mode: field.mode,
        rate: RateTag::O1,
        force: [0.0; 3],
        torque: [0.0; 3],
        unmodeled: true,
    });
    Ok(ForceTorque::from_breakdown(breakdown))
}

/// Superposition over all modes admissible for the motion.
pub fn total_force_torque(geom: &GapGeometry, motion: &RigidMotion, fluid: &FluidParams) -> Result<ForceTorque> {
    if motion.is_rotating() && !geom.is_quadratic() {
        return Err(Error::RequiresQuadraticProfile { mode: 4, m: geom.m });
    }
    let mut breakdown = Vec::new();
    for &mode in Mode::admissible(geom.m) {
        let field = ModeField::new(mode, *geom, *motion, *fluid)?;
        breakdown.extend(mode_force_torque(&field)?.breakdown);
    }
    Ok(ForceTorque::from_breakdown(breakdown))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremCase {
    /// Rotating particle, quadratic profile.
    #[serde(rename = "i")]
    Rotating,
    /// Pure translation, any `m >= 2`.
    #[serde(rename = "ii")]
    Translating,
}

impl TheoremCase {
    /// Case (i) when the particle rotates, case (ii) otherwise.
    pub fn for_motion(motion: &RigidMotion) -> Self {
        if motion.is_rotating() {
            TheoremCase::Rotating
        } else {
            TheoremCase::Translating
        }
    }
}

/// One term of the theorem next to the matching part of the mode sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDiff {
    pub term: String,
    pub theorem_force: Vector,
    pub mode_sum_force: Vector,
    pub force_diff: Vector,
    pub theorem_torque: Vector,
    pub mode_sum_torque: Vector,
    pub torque_diff: Vector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremDiff {
    pub case: TheoremCase,
    /// Theorem minus mode sum.
    #[serde(rename = "F")]
    pub force: Vector,
    #[serde(rename = "T")]
    pub torque: Vector,
    pub terms: Vec<TermDiff>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremResult {
    #[serde(rename = "F")]
    pub force: Vector,
    #[serde(rename = "T")]
    pub torque: Vector,
    pub diff: TheoremDiff,
}

fn sub(a: Vector, b: Vector) -> Vector {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: Vector, b: Vector) -> Vector {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn cross(a: Vector, b: Vector) -> Vector {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// The part of a mode sum a theorem term is compared with.
#[derive(Clone, Copy)]
enum Counterpart {
    /// Force entries of one rate for the translational motion.
    TranslationRate(RateTag),
    /// Full force for the rotational motion.
    RotationForce,
    /// Full torque for the whole motion.
    Torque,
}

struct Term {
    name: &'static str,
    force: Vector,
    torque: Vector,
    counterpart: Counterpart,
}

/// Evaluates the theorem's displayed leading terms and their difference from
/// the mode sum, term by term.
///
/// `U·e₃` is read as `(U·e₃)e₃`, `U·(e₁+e₂+e₃)` as `U` and `ω·(e₁+e₂)` as
/// `ω₁e₁ + ω₂e₂`. Case (ii) uses `ρ_ij` rates, so at `m = 2` its shear rate
/// is `|ln ε|`.
pub fn theorem_force_torque(
    case: TheoremCase,
    geom: &GapGeometry,
    motion: &RigidMotion,
    fluid: &FluidParams,
) -> Result<TheoremResult> {
    let mu = fluid.mu;
    let u = motion.translation;
    let w = motion.rotation;
    let big_r = geom.big_r;
    let terms = match case {
        TheoremCase::Rotating => {
            if !geom.is_quadratic() {
                return Err(Error::RequiresQuadraticProfile { mode: 4, m: geom.m });
            }
            let kappa = geom.kappa;
            let eps = geom.epsilon;
            let log = rate(CoeffIndex::I12, 2.0, eps)?;
            let w12 = [w[0], w[1], 0.0];
            vec![
                Term {
                    name: "U.e3",
                    force: scaled(E3, -3.0 * PI * mu / (8.0 * kappa * kappa * eps) * u[2]),
                    torque: [0.0; 3],
                    counterpart: Counterpart::TranslationRate(RateTag::Rho34),
                },
                Term {
                    name: "U",
                    force: scaled(u, -PI * mu / (2.0 * kappa) * log),
                    torque: [0.0; 3],
                    counterpart: Counterpart::TranslationRate(RateTag::Rho12),
                },
                Term {
                    name: "omega x e3",
                    force: scaled(cross(w, E3), -PI * mu * (10.0 * kappa * big_r - 3.0) / (20.0 * kappa * kappa) * log),
                    torque: [0.0; 3],
                    counterpart: Counterpart::RotationForce,
                },
                Term {
                    name: "torque",
                    force: [0.0; 3],
                    torque: scaled(add(cross(u, E3), scaled(w12, big_r)), -PI * mu * big_r / (2.0 * kappa) * log),
                    counterpart: Counterpart::Torque,
                },
            ]
        }
        TheoremCase::Translating => {
            if motion.is_rotating() {
                return Err(Error::domain("theorem_force_torque", "case (ii) needs omega = 0"));
            }
            let g12 = rate_coefficient(CoeffIndex::I12, geom)?;
            let g34 = rate_coefficient(CoeffIndex::I34, geom)?;
            vec![
                Term {
                    name: "U.e3",
                    force: scaled(E3, -3.0 * PI * mu * g34 * u[2]),
                    torque: [0.0; 3],
                    counterpart: Counterpart::TranslationRate(RateTag::Rho34),
                },
                Term {
                    name: "U",
                    force: scaled(u, -2.0 * PI * mu * g12),
                    torque: [0.0; 3],
                    counterpart: Counterpart::TranslationRate(RateTag::Rho12),
                },
                Term {
                    name: "torque",
                    force: [0.0; 3],
                    torque: scaled(cross(u, E3), -2.0 * PI * mu * big_r * g12),
                    counterpart: Counterpart::Torque,
                },
            ]
        }
    };

    let translation = total_force_torque(geom, &RigidMotion::translation(u), fluid)?;
    let whole = total_force_torque(geom, motion, fluid)?;
    let rotation_force = if motion.is_rotating() {
        total_force_torque(geom, &RigidMotion::rotation(w), fluid)?.force
    } else {
        [0.0; 3]
    };

    let mut force = [0.0; 3];
    let mut torque = [0.0; 3];
    let mut diffs = Vec::with_capacity(terms.len());
    for term in terms {
        let (mode_sum_force, mode_sum_torque) = match term.counterpart {
            Counterpart::TranslationRate(tag) => (translation.rate_part(tag).0, [0.0; 3]),
            Counterpart::RotationForce => (rotation_force, [0.0; 3]),
            Counterpart::Torque => ([0.0; 3], whole.torque),
        };
        force = add(force, term.force);
        torque = add(torque, term.torque);
        diffs.push(TermDiff {
            term: term.name.to_string(),
            theorem_force: term.force,
            mode_sum_force,
            force_diff: sub(term.force, mode_sum_force),
            theorem_torque: term.torque,
            mode_sum_torque,
            torque_diff: sub(term.torque, mode_sum_torque),
        });
    }
    Ok(TheoremResult {
        force,
        torque,
        diff: TheoremDiff {
            case,
            force: sub(force, whole.force),
            torque: sub(torque, whole.torque),
            terms: diffs,
        },
    })
}

/// Leading-order map `(U, ω) ↦ (F, T)`.
///
/// Columns are the totals for unit basis motions: six columns when `m = 2`,
/// only the three translational ones otherwise.
pub fn resistance_matrix(geom: &GapGeometry, fluid: &FluidParams) -> Result<DMatrix<f64>> {
    let ncols = if geom.is_quadratic() { 6 } else { 3 };
    let mut out = DMatrix::zeros(6, ncols);
    for col in 0..ncols {
        let mut stacked = [0.0; 6];
        stacked[col] = 1.0;
        let motion = RigidMotion::new([stacked[0], stacked[1], stacked[2]], [stacked[3], stacked[4], stacked[5]]);
        let ft = total_force_torque(geom, &motion, fluid)?;
        for i in 0..3 {
            out[(i, col)] = ft.force[i];
            out[(i + 3, col)] = ft.torque[i];
        }
    }
    Ok(out)
}
