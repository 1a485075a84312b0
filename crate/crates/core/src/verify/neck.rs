//! Quadrature over the neck: the disk `|x'| < r` in polar coordinates with a
//! stretched radius, and columns across the gap.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fields::{gradient_from_jets, Mode, ModeField, PathAnchor, PressureEval};
use crate::geometry::GapGeometry;
use crate::quad::{fixed_rule, geometric_breaks, integrate_vec, Integral, QuadOptions};

const THETA_BREAKS: [f64; 5] = [0.0, FRAC_PI_2, PI, 1.5 * PI, 2.0 * PI];

/// Options that accept the first Kronrod estimate.
fn unrefined(opts: &QuadOptions) -> QuadOptions {
    QuadOptions {
        abs_tol: f64::INFINITY,
        ..*opts
    }
}

/// Absolute target `0.1 · rel_tol · |pilot|` for a nested integral, so that
/// cancellation noise in parts of the domain where the integrand is tiny does
/// not stall refinement.
fn floored<const N: usize>(opts: &QuadOptions, pilot: &[f64; N]) -> QuadOptions {
    let size = pilot.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    QuadOptions {
        abs_tol: opts.abs_tol.max(0.1 * opts.rel_tol * size),
        ..*opts
    }
}

/// `∫_{|x'|<r} f(x') dx'` with `|x'| = L t`, `L` the boundary-layer scale.
///
/// `f` receives the options for any integral it nests (columns), with an
/// absolute target scaled from a pilot pass over the disk.
pub(crate) fn disk_integral<const N: usize, F>(geom: &GapGeometry, opts: &QuadOptions, mut f: F) -> Result<Integral<N>>
where
    F: FnMut([f64; 2], &QuadOptions) -> Result<[f64; N]>,
{
    let scale = geom.boundary_layer();
    let t_breaks = geometric_breaks(geom.r / scale);
    let ring_opts = opts.nested();
    let column_opts = ring_opts.nested();

    let loose = unrefined(&column_opts);
    let pilot = fixed_rule(
        |t| {
            let s = scale * t;
            let ring = fixed_rule(|th: f64| f([s * th.cos(), s * th.sin()], &loose), &THETA_BREAKS)?;
            Ok(ring.map(|v| v * scale * s))
        },
        &t_breaks,
    )?;
    let outer = floored(opts, &pilot);
    // an error e in every ring costs e r²/2 overall, one in every column 2π e
    let area = 0.5 * geom.r * geom.r;
    let ring_opts = QuadOptions {
        abs_tol: 0.1 * outer.abs_tol / area,
        ..ring_opts
    };
    let column_opts = QuadOptions {
        abs_tol: 0.1 * ring_opts.abs_tol / (2.0 * PI),
        ..column_opts
    };
    integrate_vec(
        |t| {
            let s = scale * t;
            let ring = integrate_vec(|th: f64| f([s * th.cos(), s * th.sin()], &column_opts), &THETA_BREAKS, &ring_opts)?;
            Ok(ring.value.map(|v| v * scale * s))
        },
        &t_breaks,
        &outer,
    )
}

/// `∫₀^{2π} f(θ) dθ`, with nested options passed as in [`disk_integral`].
pub(crate) fn circle_integral<const N: usize, F>(opts: &QuadOptions, mut f: F) -> Result<Integral<N>>
where
    F: FnMut(f64, &QuadOptions) -> Result<[f64; N]>,
{
    let column_opts = opts.nested();
    let pilot = fixed_rule(|th| f(th, &unrefined(&column_opts)), &THETA_BREAKS)?;
    let outer = floored(opts, &pilot);
    let column_opts = QuadOptions {
        abs_tol: 0.1 * outer.abs_tol / (2.0 * PI),
        ..column_opts
    };
    integrate_vec(|th| f(th, &column_opts), &THETA_BREAKS, &outer)
}

/// `∫_{-δ/2}^{δ/2} f(x3) dx3`.
pub(crate) fn column_integral<const N: usize, F>(delta: f64, opts: &QuadOptions, f: F) -> Result<[f64; N]>
where
    F: FnMut(f64) -> Result<[f64; N]>,
{
    Ok(integrate_vec(f, &[-0.5 * delta, 0.5 * delta], opts)?.value)
}

/// Checks that fields share one geometry and fluid.
pub(crate) fn common_setup(fields: &[ModeField]) -> Result<(GapGeometry, f64)> {
    let first = fields
        .first()
        .ok_or_else(|| Error::domain("verify", "at least one mode is required"))?;
    if fields
        .iter()
        .any(|f| f.geometry != first.geometry || f.fluid != first.fluid)
    {
        return Err(Error::domain("verify", "modes must share geometry and fluid"));
    }
    Ok((first.geometry, first.fluid.mu))
}

/// Velocity, strain and (optionally) test stress of one mode at a point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ModeSample {
    pub velocity: Vector3<f64>,
    pub strain: Matrix3<f64>,
    pub test_stress: Matrix3<f64>,
}

/// Planar path integrals at `x3 = 0` and at `x3 = height`.
///
/// For the squeeze and tilt modes the planar momentum defect is an even
/// quadratic in `x3` at fixed `x'`, so its integrals along `x1` and `x2` are
/// too; two heights determine them on the whole column.
#[derive(Clone, Copy, Debug)]
struct PlanarPaths {
    height: f64,
    mid: [f64; 2],
    top: [f64; 2],
}

impl PlanarPaths {
    fn at(&self, x3: f64) -> [f64; 2] {
        let w = (x3 / self.height).powi(2);
        [
            self.mid[0] + (self.top[0] - self.mid[0]) * w,
            self.mid[1] + (self.top[1] - self.mid[1]) * w,
        ]
    }
}

/// Per-`x'` cache for evaluating several modes along a vertical column.
pub(crate) struct Column<'a> {
    fields: &'a [ModeField],
    xp: [f64; 2],
    radial: f64,
    paths: Vec<Option<PlanarPaths>>,
    path_tol: f64,
    anchor: PathAnchor,
}

impl<'a> Column<'a> {
    /// `stress` prepares the planar path integrals needed by
    /// [`Column::sample`] test stresses.
    pub fn new(fields: &'a [ModeField], xp: [f64; 2], path_tol: f64, stress: Option<PathAnchor>) -> Result<Self> {
        let geom = &fields[0].geometry;
        let s = xp[0].hypot(xp[1]);
        let radial = if fields.iter().any(|f| f.mode == Mode::Squeeze) {
            crate::fields::squeeze_radial_integral(geom, s)?
        } else {
            0.0
        };
        let height = 0.5 * geom.delta_at_radius(s);
        let mut paths = Vec::with_capacity(fields.len());
        for f in fields {
            let needs = stress.is_some() && matches!(f.mode, Mode::Squeeze | Mode::Tilt);
            let anchor = stress.unwrap_or_default();
            paths.push(if needs {
                let mid = [xp[0], xp[1], 0.0];
                let top = [xp[0], xp[1], height];
                let eval = PressureEval::Radial(radial);
                let scale = f.stress_scale(&f.jets(mid, eval)?).max(f.stress_scale(&f.jets(top, eval)?));
                let path = |x, k| f.path_integral(x, k, path_tol, scale, anchor);
                Some(PlanarPaths {
                    height,
                    mid: [path(mid, 0)?, path(mid, 1)?],
                    top: [path(top, 0)?, path(top, 1)?],
                })
            } else {
                None
            });
        }
        Ok(Column {
            fields,
            xp,
            radial,
            paths,
            path_tol,
            anchor: stress.unwrap_or_default(),
        })
    }

    pub fn sample(&self, x3: f64, with_stress: bool) -> Result<Vec<ModeSample>> {
        let x = [self.xp[0], self.xp[1], x3];
        let mut out = Vec::with_capacity(self.fields.len());
        for (f, paths) in self.fields.iter().zip(&self.paths) {
            let j = f.jets(x, PressureEval::Radial(self.radial))?;
            let grad = gradient_from_jets(&j.velocity);
            let test_stress = if !with_stress {
                Matrix3::zeros()
            } else if let Some(p) = paths {
                f.test_stress_with_paths(x, &j, p.at(x3), self.path_tol)?
            } else {
                f.test_stress_unchecked(x, self.path_tol, self.anchor)?
            };
            out.push(ModeSample {
                velocity: Vector3::new(j.velocity[0].value, j.velocity[1].value, j.velocity[2].value),
                strain: grad.strain,
                test_stress,
            });
        }
        Ok(out)
    }
}
