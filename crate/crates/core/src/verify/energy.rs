//! Surface traction, primal and dual energies and the duality-gap matrix.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::neck::{circle_integral, column_integral, common_setup, disk_integral, Column, ModeSample};
use crate::error::Result;
use crate::fields::{stress_from_jets, Mode, ModeField, PathAnchor, PressureEval};
use crate::quad::QuadOptions;

/// Quadrature force and torque on the neck part of the moving surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Traction {
    #[serde(rename = "F")]
    pub force: [f64; 3],
    #[serde(rename = "T")]
    pub torque: [f64; 3],
    /// Largest component error estimate.
    pub error: f64,
}

/// `∫ σn dS` and `∫ (x − x_c) × σn dS` over the top surface above
/// `|x'| < r`, where `x_c` is the centre of particle 1.
pub fn traction_quadrature(field: &ModeField, opts: &QuadOptions) -> Result<Traction> {
    let geom = field.geometry;
    let mu = field.fluid.mu;
    let center = geom.moving_center();
    let r = disk_integral(&geom, opts, |xp, _| {
        let s = xp[0].hypot(xp[1]);
        let height = 0.5 * geom.delta_at_radius(s);
        let x = [xp[0], xp[1], height];
        let j = field.jets(x, PressureEval::Full)?;
        let sigma = stress_from_jets(&j, mu);
        // n dS = (∇h, −1) dx' with ∇h = ∇δ/2
        let grad = geom.delta(xp)?.grad;
        let n = Vector3::new(0.5 * grad[0], 0.5 * grad[1], -1.0);
        let t = sigma * n;
        let arm = Vector3::new(x[0] - center[0], x[1] - center[1], x[2] - center[2]);
        let m = arm.cross(&t);
        Ok([t[0], t[1], t[2], m[0], m[1], m[2]])
    })?;
    let v = r.value;
    Ok(Traction {
        force: [v[0], v[1], v[2]],
        torque: [v[3], v[4], v[5]],
        error: r.error.iter().fold(0.0_f64, |m, e| m.max(*e)),
    })
}

/// An integral with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub error: f64,
}

/// `μ ∫_{Ω_r} (e(ū), e(ū)) dx` for `ū` the sum of the given mode velocities.
pub fn energy_primal(fields: &[ModeField], opts: &QuadOptions) -> Result<Quantity> {
    let (geom, mu) = common_setup(fields)?;
    let r = disk_integral(&geom, opts, |xp, inner| {
        let delta = geom.delta_at_radius(xp[0].hypot(xp[1]));
        let column = Column::new(fields, xp, inner.rel_tol, None)?;
        column_integral(delta, inner, |x3| {
            let e = total(&column.sample(x3, false)?, |s| s.strain);
            Ok([mu * e.norm_squared()])
        })
    })?;
    Ok(Quantity {
        value: r.value[0],
        error: r.error[0],
    })
}

/// Parts of the dual functional for the summed test stress.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualEnergy {
    /// `∫_{∂Ω_r} ū·S̄n dS`
    pub boundary: Quantity,
    /// `(1/4μ) ∫_{Ω_r} ((S̄, S̄) − (tr S̄)²/3) dx`
    pub bulk: Quantity,
    /// `boundary − bulk`
    pub value: f64,
}

/// The dual functional of the summed test stresses over the neck. The bottom
/// face carries no velocity; the top face has outward normal `(−∇h, 1)/|·|`
/// and the lateral face `(cos θ, sin θ, 0)`.
pub fn energy_dual(fields: &[ModeField], opts: &QuadOptions, anchor: PathAnchor) -> Result<DualEnergy> {
    let (geom, mu) = common_setup(fields)?;
    let path_tol = opts.nested().nested().rel_tol;

    let top = disk_integral(&geom, opts, |xp, _| {
        let s = xp[0].hypot(xp[1]);
        let height = 0.5 * geom.delta_at_radius(s);
        let column = Column::new(fields, xp, path_tol, Some(anchor))?;
        let samples = column.sample(height, true)?;
        let u = total_vec(&samples);
        let stress = total(&samples, |s| s.test_stress);
        let grad = geom.delta(xp)?.grad;
        let n = Vector3::new(-0.5 * grad[0], -0.5 * grad[1], 1.0);
        Ok([u.dot(&(stress * n))])
    })?;

    let r = geom.r;
    let edge_delta = geom.delta_at_radius(r);
    let lateral = circle_integral(&opts.nested(), |th: f64, inner| {
        let (c, s) = (th.cos(), th.sin());
        let column = Column::new(fields, [r * c, r * s], path_tol, Some(anchor))?;
        let n = Vector3::new(c, s, 0.0);
        let v = column_integral(edge_delta, inner, |x3| {
            let samples = column.sample(x3, true)?;
            Ok([total_vec(&samples).dot(&(total(&samples, |s| s.test_stress) * n))])
        })?;
        Ok([v[0] * r])
    })?;

    let bulk = disk_integral(&geom, opts, |xp, inner| {
        let delta = geom.delta_at_radius(xp[0].hypot(xp[1]));
        let column = Column::new(fields, xp, path_tol, Some(anchor))?;
        column_integral(delta, inner, |x3| {
            let s = total(&column.sample(x3, true)?, |s| s.test_stress);
            Ok([(s.norm_squared() - s.trace().powi(2) / 3.0) / (4.0 * mu)])
        })
    })?;

    let boundary = Quantity {
        value: top.value[0] + lateral.value[0],
        error: top.error[0] + lateral.error[0],
    };
    let bulk = Quantity {
        value: bulk.value[0],
        error: bulk.error[0],
    };
    Ok(DualEnergy {
        boundary,
        bulk,
        value: boundary.value - bulk.value,
    })
}

fn total(samples: &[ModeSample], part: impl Fn(&ModeSample) -> Matrix3<f64>) -> Matrix3<f64> {
    samples.iter().fold(Matrix3::zeros(), |acc, s| acc + part(s))
}

fn total_vec(samples: &[ModeSample]) -> Vector3<f64> {
    samples.iter().fold(Vector3::zeros(), |acc, s| acc + s.velocity)
}

/// One entry `ℓ[α, β]` of the duality-gap matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    pub alpha: Mode,
    pub beta: Mode,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapMatrix {
    pub epsilon: f64,
    pub anchor: PathAnchor,
    /// Upper triangle, row by row.
    pub cells: Vec<GapCell>,
    /// `Σ ℓ[α,α] + 2 Σ_{α<β} ℓ[α,β]`
    pub err_proxy: f64,
}

impl GapMatrix {
    pub fn get(&self, alpha: Mode, beta: Mode) -> Option<&GapCell> {
        let (a, b) = if alpha <= beta { (alpha, beta) } else { (beta, alpha) };
        self.cells.iter().find(|c| c.alpha == a && c.beta == b)
    }
}

/// Maximum number of cells: the upper triangle of a 5×5 matrix.
const MAX_CELLS: usize = 15;

/// `ℓ[α,β] = μ ∫ (A_α, A_β)` with `A = e(ū) − (S̄ − tr S̄/3 𝕀)/(2μ)`.
pub fn duality_gap(fields: &[ModeField], opts: &QuadOptions, anchor: PathAnchor) -> Result<GapMatrix> {
    let (geom, mu) = common_setup(fields)?;
    let path_tol = opts.nested().nested().rel_tol;
    let n = fields.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    assert!(pairs.len() <= MAX_CELLS, "at most five modes");

    let r = disk_integral::<MAX_CELLS, _>(&geom, opts, |xp, inner| {
        let delta = geom.delta_at_radius(xp[0].hypot(xp[1]));
        let column = Column::new(fields, xp, path_tol, Some(anchor))?;
        column_integral(delta, inner, |x3| {
            let samples = column.sample(x3, true)?;
            let a: Vec<Matrix3<f64>> = samples
                .iter()
                .map(|s| {
                    let dev = s.test_stress - Matrix3::identity() * (s.test_stress.trace() / 3.0);
                    s.strain - dev / (2.0 * mu)
                })
                .collect();
            let mut out = [0.0; MAX_CELLS];
            for (k, &(i, j)) in pairs.iter().enumerate() {
                out[k] = mu * a[i].component_mul(&a[j]).sum();
            }
            Ok(out)
        })
    })?;

    let cells: Vec<GapCell> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| GapCell {
            alpha: fields[i].mode,
            beta: fields[j].mode,
            value: r.value[k],
            error: r.error[k],
        })
        .collect();
    let err_proxy = cells
        .iter()
        .map(|c| if c.alpha == c.beta { c.value } else { 2.0 * c.value })
        .sum();
    Ok(GapMatrix {
        epsilon: geom.epsilon,
        anchor,
        cells,
        err_proxy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::mode_force_torque;
    use crate::fields::{FluidParams, RigidMotion};
    use crate::geometry::GapGeometry;
    use approx::assert_relative_eq;

    fn field(mode: Mode, eps: f64, motion: RigidMotion) -> ModeField {
        let g = GapGeometry::new(2.0, 0.5, eps, 0.5, 1.0).unwrap();
        ModeField::new(mode, g, motion, FluidParams { mu: 1.0 }).unwrap()
    }

    #[test]
    fn zero_motion_gives_zero_traction() {
        let f = field(Mode::Squeeze, 1e-3, RigidMotion::default());
        let t = traction_quadrature(&f, &QuadOptions::relative(1e-8)).unwrap();
        assert_eq!(t.force, [0.0; 3]);
        assert_eq!(t.torque, [0.0; 3]);
    }

    #[test]
    fn squeeze_traction_tracks_leading_term() {
        let f = field(Mode::Squeeze, 1e-5, RigidMotion::translation([0.0, 0.0, 1.0]));
        let t = traction_quadrature(&f, &QuadOptions::relative(1e-9)).unwrap();
        let predicted = mode_force_torque(&f).unwrap().force[2];
        assert!(t.force[0].abs() < 1e-10 * t.force[2].abs());
        assert!(t.force[1].abs() < 1e-10 * t.force[2].abs());
        assert_relative_eq!(t.force[2], predicted, max_relative = 1e-2);
    }

    #[test]
    fn energies_scale_quadratically() {
        let opts = QuadOptions::relative(1e-8);
        let motion = RigidMotion::new([1.0, 0.0, 0.5], [0.0, 0.0, 0.0]);
        let fields = [field(Mode::ShearX, 1e-2, motion), field(Mode::Squeeze, 1e-2, motion)];
        let scaled = [field(Mode::ShearX, 1e-2, motion.scaled(-3.0)), field(Mode::Squeeze, 1e-2, motion.scaled(-3.0))];
        let p = energy_primal(&fields, &opts).unwrap().value;
        let ps = energy_primal(&scaled, &opts).unwrap().value;
        assert_relative_eq!(ps, 9.0 * p, max_relative = 1e-10);
        let d = energy_dual(&fields, &opts, PathAnchor::Origin).unwrap().value;
        let ds = energy_dual(&scaled, &opts, PathAnchor::Origin).unwrap().value;
        assert_relative_eq!(ds, 9.0 * d, max_relative = 1e-10);
    }

    #[test]
    fn spin_test_stress_has_no_dual_energy() {
        let f = [field(Mode::Spin, 1e-2, RigidMotion::rotation([0.3, 0.2, 1.0]))];
        let d = energy_dual(&f, &QuadOptions::relative(1e-8), PathAnchor::Origin).unwrap();
        assert_eq!(d.boundary.value, 0.0);
        assert_eq!(d.bulk.value, 0.0);

        let gap = duality_gap(&f, &QuadOptions::relative(1e-8), PathAnchor::Origin).unwrap();
        let primal = energy_primal(&f, &QuadOptions::relative(1e-8)).unwrap().value;
        assert_relative_eq!(gap.cells[0].value, primal, max_relative = 1e-8);
    }

    #[test]
    fn zero_motion_gives_zero_gap() {
        let fields: Vec<ModeField> = Mode::ALL.iter().map(|&m| field(m, 1e-2, RigidMotion::default())).collect();
        let gap = duality_gap(&fields, &QuadOptions::relative(1e-8), PathAnchor::NeckEdge).unwrap();
        assert_eq!(gap.cells.len(), 15);
        assert!(gap.cells.iter().all(|c| c.value == 0.0));
        assert_eq!(gap.err_proxy, 0.0);
    }
}
