//! Globally adaptive Gauss–Kronrod (G7/K15) quadrature.
//!
//! Integrands may be vector valued (`[f64; N]`), in which case all
//! components share the panel refinement and convergence is judged on the
//! max-norm. Results are deterministic for a given integrand, interval and
//! tolerance: panel selection breaks ties by position.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_panels: 4000,
        }
    }
}

impl QuadOptions {
    pub fn relative(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }

    /// Options for an integral nested inside another adaptive integral.
    pub fn nested(&self) -> Self {
        QuadOptions {
            rel_tol: self.rel_tol * 0.1,
            abs_tol: self.abs_tol * 0.1,
            max_panels: self.max_panels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub evaluations: usize,
}

/// Scalar integration result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    magnitude: f64,
}

impl<const N: usize> Panel<N> {
    fn error_norm(&self) -> f64 {
        self.error.iter().fold(0.0_f64, |m, e| m.max(*e))
    }
}

fn max_norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn gk15<const N: usize, F>(f: &mut F, a: f64, b: f64) -> Result<Panel<N>>
where
    F: FnMut(f64) -> Result<[f64; N]>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    let mut magnitude = 0.0;
    for (k, (&x, &w)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let nodes: &[f64] = if x == 0.0 {
            &[0.0]
        } else {
            &[-1.0, 1.0]
        };
        for &sign in nodes {
            let fx = f(center + sign * half * x)?;
            for c in 0..N {
                kronrod[c] += w * fx[c];
                if k % 2 == 1 {
                    gauss[c] += WG[k / 2] * fx[c];
                }
            }
            magnitude += w * max_norm(&fx);
        }
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for c in 0..N {
        value[c] = kronrod[c] * half;
        error[c] = ((kronrod[c] - gauss[c]) * half).abs();
    }
    Ok(Panel {
        a,
        b,
        value,
        error,
        magnitude: magnitude * half.abs(),
    })
}

/// Integrates a vector-valued function over `[breaks[0], breaks[last]]`,
/// starting from one panel per consecutive pair of breakpoints.
pub fn integrate_vec<const N: usize, F>(
    mut f: F,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<Integral<N>>
where
    F: FnMut(f64) -> Result<[f64; N]>,
{
    assert!(breaks.len() >= 2, "need at least one interval");
    let mut panels = Vec::with_capacity(breaks.len() + 64);
    for w in breaks.windows(2) {
        if w[0] != w[1] {
            panels.push(gk15(&mut f, w[0], w[1])?);
        }
    }
    let mut evaluations = 15 * panels.len();
    loop {
        let mut value = [0.0; N];
        let mut error = [0.0; N];
        let mut magnitude = 0.0;
        for p in &panels {
            for c in 0..N {
                value[c] += p.value[c];
                error[c] += p.error[c];
            }
            magnitude += p.magnitude;
        }
        let target = opts
            .abs_tol
            .max(opts.rel_tol * max_norm(&value))
            .max(50.0 * f64::EPSILON * magnitude);
        let err = error.iter().fold(0.0_f64, |m, e| m.max(*e));
        if err <= target || panels.is_empty() {
            return Ok(Integral {
                value,
                error,
                evaluations,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, p)| {
                let e = p.error_norm();
                if e > be {
                    (i, e)
                } else {
                    (bi, be)
                }
            })
            .0;
        let p = panels[worst];
        let mid = 0.5 * (p.a + p.b);
        let too_narrow = (p.b - p.a).abs() <= 1e-14 * p.a.abs().max(p.b.abs()).max(f64::MIN_POSITIVE);
        if panels.len() >= opts.max_panels || too_narrow || mid == p.a || mid == p.b {
            return Err(Error::Quadrature {
                estimate: err,
                target,
                evaluations,
            });
        }
        let left = gk15(&mut f, p.a, mid)?;
        let right = gk15(&mut f, mid, p.b)?;
        evaluations += 30;
        panels[worst] = left;
        panels.insert(worst + 1, right);
    }
}

/// One Kronrod sum per consecutive pair of breakpoints, without refinement.
/// Cheap magnitude estimates for setting tolerances.
pub fn fixed_rule<const N: usize, F>(mut f: F, breaks: &[f64]) -> Result<[f64; N]>
where
    F: FnMut(f64) -> Result<[f64; N]>,
{
    let mut total = [0.0; N];
    for w in breaks.windows(2) {
        let p = gk15(&mut f, w[0], w[1])?;
        for c in 0..N {
            total[c] += p.value[c];
        }
    }
    Ok(total)
}

/// Scalar integral over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate>
where
    F: FnMut(f64) -> f64,
{
    integrate_breaks(|x| Ok(f(x)), &[a, b], opts)
}

/// Scalar integral with a fallible integrand and explicit breakpoints.
pub fn integrate_breaks<F>(mut f: F, breaks: &[f64], opts: &QuadOptions) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = integrate_vec(|x| Ok([f(x)?]), breaks, opts)?;
    Ok(Estimate {
        value: r.value[0],
        error: r.error[0],
        evaluations: r.evaluations,
    })
}

/// Breakpoints `0, 1/2, 1, 2, 4, ...` capped at `upper`, for integrands in a
/// stretched variable whose structure sits near the origin.
pub fn geometric_breaks(upper: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut t = 0.5;
    while t < upper {
        breaks.push(t);
        t *= 2.0;
    }
    breaks.push(upper);
    breaks
}
