//! Least-squares fits of `|v(ε)|` to blow-up models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio of smallest to largest singular value below which a fit is refused.
const CONDITION_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FitModel {
    /// `A ε^(-p)`, fitted in log-log.
    Power,
    /// `A |ln ε| + B`.
    LogPlusConst,
    /// `A ε^(-p) + B |ln ε| + C`; `p` fixed when given, otherwise searched.
    PowerPlusLog { exponent: Option<f64> },
}

impl FitModel {
    pub fn name(&self) -> &'static str {
        match self {
            FitModel::Power => "power",
            FitModel::LogPlusConst => "log_plus_const",
            FitModel::PowerPlusLog { .. } => "power_plus_log",
        }
    }
}

/// Fitted parameters of `|v|` with their standard errors; unused parameters
/// are zero. `residual` is the RMS relative misfit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: FitModel,
    #[serde(rename = "A")]
    pub a: f64,
    pub p: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Standard errors of `(A, p, B, C)`; NaN when the fit has no spare data.
    pub stderr: [f64; 4],
    pub residual: f64,
    /// Common sign of the values.
    pub sign: f64,
}

struct Linear {
    coef: Vec<f64>,
    stderr: Vec<f64>,
}

/// Linear least squares on column-normalised data.
fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Linear> {
    let n = y.len();
    let k = columns.len();
    if n < k {
        return Err(Error::IllConditioned(format!("{n} points for {k} parameters")));
    }
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .collect();
    if norms.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::IllConditioned("degenerate design column".into()));
    }
    let a = DMatrix::from_fn(n, k, |i, j| columns[j][i] / norms[j]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > CONDITION_FLOOR * smax) {
        return Err(Error::IllConditioned(format!("condition ratio {:e}", smin / smax)));
    }
    let rhs = DVector::from_column_slice(y);
    let x = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let rss = (&a * &x - &rhs).norm_squared();
    let v_t = svd.v_t.as_ref().expect("requested V");
    let dof = n - k;
    let sigma2 = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    let stderr = (0..k)
        .map(|j| {
            let var: f64 = (0..k)
                .map(|i| (v_t[(i, j)] / svd.singular_values[i]).powi(2))
                .sum();
            (sigma2 * var).sqrt() / norms[j]
        })
        .collect();
    Ok(Linear {
        coef: (0..k).map(|j| x[j] / norms[j]).collect(),
        stderr,
    })
}

fn relative_rms(fitted: impl Iterator<Item = f64>, y: &[f64]) -> f64 {
    let sum: f64 = fitted.zip(y).map(|(f, v)| ((f - v) / v).powi(2)).sum();
    (sum / y.len() as f64).sqrt()
}

fn power_plus_log(eps: &[f64], y: &[f64], p: f64) -> Result<Linear> {
    let cols = vec![
        eps.iter().map(|e| e.powf(-p)).collect(),
        eps.iter().map(|e| e.ln().abs()).collect(),
        vec![1.0; eps.len()],
    ];
    least_squares(&cols, y)
}

/// Searches the exponent minimising the relative misfit; golden section after
/// a coarse scan.
fn search_exponent(eps: &[f64], y: &[f64]) -> Result<f64> {
    let misfit = |p: f64| -> f64 {
        match power_plus_log(eps, y, p) {
            Ok(l) => {
                let fit = eps
                    .iter()
                    .map(|e| l.coef[0] * e.powf(-p) + l.coef[1] * e.ln().abs() + l.coef[2]);
                relative_rms(fit, y)
            }
            Err(_) => f64::INFINITY,
        }
    };
    let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.01).collect();
    let (best, _) = grid
        .iter()
        .map(|&p| (p, misfit(p)))
        .fold((f64::NAN, f64::INFINITY), |acc, (p, m)| if m < acc.1 { (p, m) } else { acc });
    if !best.is_finite() {
        return Err(Error::IllConditioned("no admissible exponent".into()));
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best - 0.01, best + 0.01);
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if misfit(a) < misfit(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fits `|values|` against `epsilons` with the given model.
pub fn exponent_fit(epsilons: &[f64], values: &[f64], model: FitModel) -> Result<FitRecord> {
    if epsilons.len() != values.len() {
        return Err(Error::IllConditioned(format!(
            "{} values for {} gap widths",
            values.len(),
            epsilons.len()
        )));
    }
    if values.iter().chain(epsilons).any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned("non-finite input".into()));
    }
    if values.iter().any(|&v| v == 0.0) {
        return Err(Error::IllConditioned("zero value in series".into()));
    }
    let sign = values[0].signum();
    if values.iter().any(|v| v.signum() != sign) {
        return Err(Error::IllConditioned("values change sign".into()));
    }
    let y: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let nan = f64::NAN;
    let record = match model {
        FitModel::Power => {
            let cols = vec![vec![1.0; y.len()], epsilons.iter().map(|e| -e.ln()).collect()];
            let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
            let l = least_squares(&cols, &logs)?;
            let a = l.coef[0].exp();
            let p = l.coef[1];
            FitRecord {
                model,
                a,
                p,
                b: 0.0,
                c: 0.0,
                stderr: [a * l.stderr[0], l.stderr[1], 0.0, 0.0],
                residual: relative_rms(epsilons.iter().map(|e| a * e.powf(-p)), &y),
                sign,
            }
        }
        FitModel::LogPlusConst => {
            let cols = vec![epsilons.iter().map(|e| e.ln().abs()).collect(), vec![1.0; y.len()]];
            let l = least_squares(&cols, &y)?;
            FitRecord {
                model,
                a: l.coef[0],
                p: 0.0,
                b: l.coef[1],
                c: 0.0,
                stderr: [l.stderr[0], 0.0, l.stderr[1], 0.0],
                residual: relative_rms(epsilons.iter().map(|e| l.coef[0] * e.ln().abs() + l.coef[1]), &y),
                sign,
            }
        }
        FitModel::PowerPlusLog { exponent } => {
            let (p, p_err) = match exponent {
                Some(p) => (p, 0.0),
                None => {
                    if y.len() < 5 {
                        return Err(Error::IllConditioned(
                            "a free exponent with three coefficients needs at least five points".into(),
                        ));
                    }
                    (search_exponent(epsilons, &y)?, nan)
                }
            };
            let l = power_plus_log(epsilons, &y, p)?;
            FitRecord {
                model,
                a: l.coef[0],
                p,
                b: l.coef[1],
                c: l.coef[2],
                stderr: [l.stderr[0], p_err, l.stderr[1], l.stderr[2]],
                residual: relative_rms(
                    epsilons
                        .iter()
                        .map(|e| l.coef[0] * e.powf(-p) + l.coef[1] * e.ln().abs() + l.coef[2]),
                    &y,
                ),
                sign,
            }
        }
    };
    Ok(record)
}

/// Least-squares slope of `ln|v|` against `ln ε`.
pub fn log_log_slope(epsilons: &[f64], values: &[f64]) -> Result<f64> {
    let cols = vec![vec![1.0; values.len()], epsilons.iter().map(|e| e.ln()).collect()];
    let logs: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    if logs.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned("zero value in slope series".into()));
    }
    Ok(least_squares(&cols, &logs)?.coef[1])
}
