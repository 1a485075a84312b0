//! Numerical verification of the mode fields and of the force asymptotics:
//! pointwise identities, traction quadrature as an independent oracle for the
//! leading coefficients, and duality-gap trends over ε sweeps.

pub mod energy;
pub mod fit;
mod neck;
pub mod suites;
pub mod sweep;

use serde::{Deserialize, Serialize};

pub use energy::{duality_gap, energy_dual, energy_primal, traction_quadrature, GapCell, GapMatrix, Traction};
pub use fit::{exponent_fit, log_log_slope, FitModel, FitRecord};
pub use suites::{default_suite_options, invariant_suites, invariant_suites_with, SuiteResult};
pub use sweep::{duality_gap_sweep, CoefficientFit, GapSeries, GapSlope, SweepReport, SweepSpec, TractionRecord};

use crate::error::Result;
use crate::fields::{FluidParams, RigidMotion};
use crate::geometry::GapGeometry;
use crate::quad::QuadOptions;

/// Motion used when none is configured: every component set, rotation only
/// where the profile admits it.
pub fn reference_motion(geom: &GapGeometry) -> RigidMotion {
    let w = if geom.is_quadratic() { [1.0; 3] } else { [0.0; 3] };
    RigidMotion::new([1.0; 3], w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub geometry: GapGeometry,
    pub motion: RigidMotion,
    /// Set when the configured motion was zero and [`reference_motion`] was
    /// verified instead.
    pub reference_motion: bool,
    pub fluid: FluidParams,
    pub suites: Vec<SuiteResult>,
    pub sweep: Option<SweepReport>,
    pub passed: bool,
}

/// Invariant suites at `geom`, plus the sweep when one is given.
pub fn verify(
    geom: &GapGeometry,
    motion: &RigidMotion,
    fluid: &FluidParams,
    sweep: Option<&SweepSpec>,
) -> Result<VerificationReport> {
    verify_with(geom, motion, fluid, &default_suite_options(), sweep)
}

/// [`verify`] with explicit quadrature settings for the suites.
pub fn verify_with(
    geom: &GapGeometry,
    motion: &RigidMotion,
    fluid: &FluidParams,
    opts: &QuadOptions,
    sweep: Option<&SweepSpec>,
) -> Result<VerificationReport> {
    let (motion, reference) = if motion.is_zero() {
        (reference_motion(geom), true)
    } else {
        (*motion, false)
    };
    let suites = invariant_suites_with(geom, &motion, fluid, opts)?;
    let sweep = sweep.map(|s| duality_gap_sweep(s, geom, &motion, fluid)).transpose()?;
    let passed = suites.iter().filter(|s| !s.informational).all(|s| s.passed)
        && sweep.as_ref().map_or(true, |s| s.passed);
    Ok(VerificationReport {
        geometry: *geom,
        motion,
        reference_motion: reference,
        fluid: *fluid,
        suites,
        sweep,
        passed,
    })
}
