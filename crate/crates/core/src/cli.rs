//! Command-line front end: configuration, subcommand dispatch and output.
//!
//! Configuration comes from a flat `key = value` file and from flags; flags
//! win. Data goes to stdout (or `--out`), diagnostics to stderr.
//!
//! Exit codes: 0 success, 1 failed invariant, 2 configuration error,
//! 3 numerical non-convergence.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::asymptotics::{resistance_matrix, theorem_force_torque, total_force_torque, TheoremCase};
use crate::error::{Error, Result};
use crate::fields::{FluidParams, Mode, ModeField, PathAnchor, RigidMotion};
use crate::geometry::{ellipsoid_kappa, GapGeometry, NeckPoint};
use crate::quad::QuadOptions;
use crate::verify::sweep::{coefficient_fits, gap_series, traction_series, COMPONENTS};
use crate::verify::{default_suite_options, verify_with, FitModel, SweepReport, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Keys accepted in a configuration file.
pub const KEYS: [&str; 16] = [
    "m",
    "kappa",
    "ellipsoid_R",
    "epsilon",
    "r",
    "R",
    "mu",
    "U",
    "omega",
    "epsilons",
    "fit_model",
    "format",
    "path",
    "quad_tol",
    "max_panels",
    "anchor",
];

const DEFAULT_QUAD_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "gapflow", version, about = "Stokes flow in the thin gap between two nearly touching particles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leading-order force and torque on the moving particle (JSON)
    Force(ConfigArgs),
    /// Leading-order resistance matrix (CSV)
    Resistance(ConfigArgs),
    /// Evaluate one mode field at points (JSON)
    Fields(FieldsArgs),
    /// Run the invariant suites, and the sweep when `epsilons` is set (JSON)
    Verify(ConfigArgs),
    /// Traction, fits and duality gap over a sweep of gaps (CSV)
    Sweep(ConfigArgs),
}

/// Flags shared by every subcommand. Values are kept as text and parsed
/// together with the configuration file so errors name the key.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Configuration file of `key = value` lines
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Profile exponent
    #[arg(long)]
    pub m: Option<String>,
    /// Profile coefficient (excludes --ellipsoid-R)
    #[arg(long)]
    pub kappa: Option<String>,
    /// Resolve kappa from an axisymmetric body of this radius
    #[arg(long = "ellipsoid-R")]
    pub ellipsoid_r: Option<String>,
    /// Gap between the particles
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Neck radius (default R/2)
    #[arg(long = "r")]
    pub neck: Option<String>,
    /// Particle scale (default ellipsoid_R, else 1)
    #[arg(long = "R")]
    pub big_r: Option<String>,
    /// Viscosity (default 1)
    #[arg(long)]
    pub mu: Option<String>,
    /// Translational velocity a,b,c
    #[arg(long = "U", allow_hyphen_values = true)]
    pub u: Option<String>,
    /// Angular velocity a,b,c (m = 2 only)
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<String>,
    /// Output file instead of stdout
    #[arg(long)]
    pub out: Option<String>,
    /// json or csv
    #[arg(long)]
    pub format: Option<String>,
    /// Relative quadrature tolerance
    #[arg(long)]
    pub quad_tol: Option<String>,
    /// Comma-separated gaps for a sweep
    #[arg(long)]
    pub epsilons: Option<String>,
    /// auto, power, log_plus_const, power_plus_log or power_plus_log:<p>
    #[arg(long)]
    pub fit_model: Option<String>,
    /// Lower limit of the planar test-stress paths: origin or neck_edge
    #[arg(long)]
    pub anchor: Option<String>,
    /// Panel budget of every adaptive integral
    #[arg(long)]
    pub max_panels: Option<String>,
}

#[derive(Debug, Args)]
pub struct FieldsArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Mode index 1..=5
    #[arg(long)]
    pub mode: u8,
    /// Point x1,x2,x3 in the neck; repeatable
    #[arg(long = "point", allow_hyphen_values = true)]
    pub points: Vec<String>,
    #[arg(long, value_enum, default_value_t = Quantity::Velocity)]
    pub quantity: Quantity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Velocity,
    Pressure,
    Stress,
    Divergence,
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Everything a subcommand needs, validated.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub geometry: GapGeometry,
    pub motion: RigidMotion,
    pub fluid: FluidParams,
    pub sweep: Option<SweepSpec>,
    pub fit_model: Option<FitModel>,
    pub quad_tol: f64,
    pub max_panels: usize,
    pub anchor: PathAnchor,
    pub format: Option<Format>,
    pub path: Option<PathBuf>,
}

impl RunConfig {
    fn quad_options(&self) -> QuadOptions {
        QuadOptions {
            max_panels: self.max_panels,
            ..default_suite_options()
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
/// keys are errors.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(line, format!("line {} is not `key = value`", n + 1)));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::config(key, "given twice"));
        }
    }
    Ok(out)
}

fn flag_values(args: &ConfigArgs) -> [(&'static str, &Option<String>); 15] {
    [
        ("m", &args.m),
        ("kappa", &args.kappa),
        ("ellipsoid_R", &args.ellipsoid_r),
        ("epsilon", &args.epsilon),
        ("r", &args.neck),
        ("R", &args.big_r),
        ("mu", &args.mu),
        ("U", &args.u),
        ("omega", &args.omega),
        ("epsilons", &args.epsilons),
        ("fit_model", &args.fit_model),
        ("format", &args.format),
        ("path", &args.out),
        ("quad_tol", &args.quad_tol),
        ("max_panels", &args.max_panels),
    ]
}

/// File values overridden by flags, then validated.
pub fn parse_config(args: &ConfigArgs, file: Option<&str>) -> Result<RunConfig> {
    let mut values = match file {
        Some(text) => parse_config_text(text)?,
        None => BTreeMap::new(),
    };
    for (key, v) in flag_values(args) {
        if let Some(v) = v {
            values.insert(key.to_string(), v.clone());
        }
    }
    if let Some(a) = &args.anchor {
        values.insert("anchor".into(), a.clone());
    }
    resolve(&values)
}

fn number(values: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    values
        .get(key)
        .map(|v| match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::config(key, format!("`{v}` is not a finite number"))),
        })
        .transpose()
}

fn positive(values: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match number(values, key)? {
        Some(x) if x <= 0.0 => Err(Error::config(key, format!("must be positive, got {x}"))),
        other => Ok(other),
    }
}

fn list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| match s.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::config(key, format!("`{}` is not a finite number", s.trim()))),
        })
        .collect()
}

fn vector(values: &BTreeMap<String, String>, key: &str) -> Result<[f64; 3]> {
    let Some(text) = values.get(key) else {
        return Ok([0.0; 3]);
    };
    let v = list(key, text)?;
    v.try_into()
        .map_err(|v: Vec<f64>| Error::config(key, format!("expected 3 components, got {}", v.len())))
}

fn fit_model(text: &str) -> Result<Option<FitModel>> {
    let bad = || Error::config("fit_model", format!("unknown model `{text}`"));
    Ok(match text {
        "auto" => None,
        "power" => Some(FitModel::Power),
        "log_plus_const" => Some(FitModel::LogPlusConst),
        "power_plus_log" => Some(FitModel::PowerPlusLog { exponent: None }),
        other => {
            let p = other.strip_prefix("power_plus_log:").ok_or_else(bad)?;
            let p: f64 = p.parse().map_err(|_| bad())?;
            Some(FitModel::PowerPlusLog { exponent: Some(p) })
        }
    })
}

fn resolve(values: &BTreeMap<String, String>) -> Result<RunConfig> {
    let m = number(values, "m")?.ok_or_else(|| Error::config("m", "missing"))?;
    if !(m >= 2.0) {
        return Err(Error::config("m", format!("must be at least 2, got {m}")));
    }
    let epsilon = positive(values, "epsilon")?.ok_or_else(|| Error::config("epsilon", "missing"))?;
    let ellipsoid = positive(values, "ellipsoid_R")?;
    let big_r = positive(values, "R")?.or(ellipsoid).unwrap_or(1.0);
    let kappa = match (positive(values, "kappa")?, ellipsoid) {
        (Some(k), None) => k,
        (None, Some(e)) => ellipsoid_kappa(m, e)?,
        (Some(_), Some(_)) => return Err(Error::config("kappa", "give kappa or ellipsoid_R, not both")),
        (None, None) => return Err(Error::config("kappa", "missing (give kappa or ellipsoid_R)")),
    };
    let r = positive(values, "r")?.unwrap_or(0.5 * big_r);
    if r >= big_r {
        return Err(Error::config("r", format!("neck radius {r} must be below R = {big_r}")));
    }
    let geometry = GapGeometry::new(m, kappa, epsilon, r, big_r).map_err(|e| Error::config("epsilon", e.to_string()))?;
    let fluid = FluidParams {
        mu: positive(values, "mu")?.unwrap_or(1.0),
    };
    let motion = RigidMotion::new(vector(values, "U")?, vector(values, "omega")?);
    if motion.is_rotating() && !geometry.is_quadratic() {
        return Err(Error::config("omega", format!("rotation needs m = 2, got m = {m}")));
    }

    let quad_tol = positive(values, "quad_tol")?.unwrap_or(DEFAULT_QUAD_TOL);
    if quad_tol >= 1.0 {
        return Err(Error::config("quad_tol", format!("must be below 1, got {quad_tol}")));
    }
    let max_panels = match values.get("max_panels") {
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(Error::config("max_panels", format!("`{v}` is not a positive integer"))),
        },
        None => QuadOptions::default().max_panels,
    };
    let fit_model = values.get("fit_model").map(|t| fit_model(t)).transpose()?.flatten();
    let sweep = values
        .get("epsilons")
        .map(|t| {
            let eps = list("epsilons", t)?;
            SweepSpec::new(eps, quad_tol, fit_model)
                .map(|s| s.with_max_panels(max_panels))
                .map_err(|e| Error::config("epsilons", e.to_string()))
        })
        .transpose()?;
    let anchor = match values.get("anchor").map(String::as_str) {
        None | Some("origin") => PathAnchor::Origin,
        Some("neck_edge") => PathAnchor::NeckEdge,
        Some(other) => return Err(Error::config("anchor", format!("expected origin or neck_edge, got `{other}`"))),
    };
    let format = match values.get("format").map(String::as_str) {
        None => None,
        Some("json") => Some(Format::Json),
        Some("csv") => Some(Format::Csv),
        Some(other) => return Err(Error::config("format", format!("expected json or csv, got `{other}`"))),
    };
    Ok(RunConfig {
        geometry,
        motion,
        fluid,
        sweep,
        fit_model,
        quad_tol,
        max_panels,
        anchor,
        format,
        path: values.get("path").map(PathBuf::from),
    })
}

/// Pretty JSON with every float written to 17 significant digits.
struct RoundTrip<'a>(PrettyFormatter<'a>);

impl Formatter for RoundTrip<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTrip(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializable output");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// CSV cell: 17 significant digits, empty when absent.
fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Quadrature { .. } | Error::IllConditioned(_) | Error::SingularSystem(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn only_format(cfg: &RunConfig, allowed: &[Format], default: Format) -> Result<Format> {
    let f = cfg.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Error::config("format", format!("{f:?} output is not available for this subcommand").to_lowercase()))
    }
}

#[derive(Serialize)]
struct ForceOutput {
    #[serde(rename = "F")]
    force: [f64; 3],
    #[serde(rename = "T")]
    torque: [f64; 3],
    breakdown: Vec<crate::asymptotics::Contribution>,
    theorem_diff: crate::asymptotics::TheoremDiff,
}

fn force(cfg: &RunConfig) -> Result<String> {
    only_format(cfg, &[Format::Json], Format::Json)?;
    let total = total_force_torque(&cfg.geometry, &cfg.motion, &cfg.fluid)?;
    let case = TheoremCase::for_motion(&cfg.motion);
    let theorem = theorem_force_torque(case, &cfg.geometry, &cfg.motion, &cfg.fluid)?;
    Ok(to_json(&ForceOutput {
        force: total.force,
        torque: total.torque,
        breakdown: total.breakdown,
        theorem_diff: theorem.diff,
    }))
}

const MOTION_COLUMNS: [&str; 6] = ["U1", "U2", "U3", "omega1", "omega2", "omega3"];

#[derive(Serialize)]
struct ResistanceOutput {
    rows: Vec<&'static str>,
    columns: Vec<&'static str>,
    matrix: Vec<Vec<f64>>,
}

fn resistance(cfg: &RunConfig) -> Result<String> {
    let format = only_format(cfg, &[Format::Csv, Format::Json], Format::Csv)?;
    let a = resistance_matrix(&cfg.geometry, &cfg.fluid)?;
    let columns = &MOTION_COLUMNS[..a.ncols()];
    if format == Format::Json {
        return Ok(to_json(&ResistanceOutput {
            rows: COMPONENTS.to_vec(),
            columns: columns.to_vec(),
            matrix: (0..6).map(|i| a.row(i).iter().copied().collect()).collect(),
        }));
    }
    let mut out = format!("row,{}\n", columns.join(","));
    for (i, name) in COMPONENTS.iter().enumerate() {
        let cells: Vec<String> = a.row(i).iter().map(|v| cell(Some(*v))).collect();
        let _ = writeln!(out, "{name},{}", cells.join(","));
    }
    Ok(out)
}

#[derive(Serialize)]
#[serde(untagged)]
enum FieldValue {
    Scalar(f64),
    Vector([f64; 3]),
    Tensor([[f64; 3]; 3]),
    Residual { computed: [f64; 3], closed_form: [f64; 3] },
}

#[derive(Serialize)]
struct FieldSample {
    mode: Mode,
    quantity: Quantity,
    point: [f64; 3],
    value: FieldValue,
}

fn vec3(v: nalgebra::Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn fields(cfg: &RunConfig, args: &FieldsArgs) -> Result<String> {
    only_format(cfg, &[Format::Json], Format::Json)?;
    let mode = Mode::from_index(args.mode).map_err(|e| Error::config("mode", e.to_string()))?;
    if mode.requires_quadratic_profile() && !cfg.geometry.is_quadratic() {
        return Err(Error::config("mode", format!("mode {} needs m = 2", args.mode)));
    }
    if args.points.is_empty() {
        return Err(Error::config("point", "at least one point is required"));
    }
    let field = ModeField::new(mode, cfg.geometry, cfg.motion, cfg.fluid)?;
    let mut samples = Vec::new();
    for text in &args.points {
        let p: [f64; 3] = list("point", text)?
            .try_into()
            .map_err(|_| Error::config("point", format!("`{text}` needs 3 coordinates")))?;
        let x = NeckPoint::new(p[0], p[1], p[2]);
        if !cfg.geometry.contains(&x) {
            return Err(Error::config("point", format!("`{text}` is outside the neck")));
        }
        let value = match args.quantity {
            Quantity::Velocity => FieldValue::Vector(vec3(field.velocity(&x)?)),
            Quantity::Pressure => FieldValue::Scalar(field.pressure(&x)?),
            Quantity::Divergence => FieldValue::Scalar(field.divergence(&x)?),
            Quantity::Stress => {
                let s = field.stress(&x)?;
                FieldValue::Tensor([0, 1, 2].map(|i| [s[(i, 0)], s[(i, 1)], s[(i, 2)]]))
            }
            Quantity::Residual => {
                let r = field.residual33(&x)?;
                FieldValue::Residual {
                    computed: vec3(r.computed),
                    closed_form: vec3(r.closed_form),
                }
            }
        };
        samples.push(FieldSample {
            mode,
            quantity: args.quantity,
            point: p,
            value,
        });
    }
    Ok(to_json(&samples))
}

fn verify(cfg: &RunConfig) -> Result<(String, bool)> {
    only_format(cfg, &[Format::Json], Format::Json)?;
    let report = verify_with(&cfg.geometry, &cfg.motion, &cfg.fluid, &cfg.quad_options(), cfg.sweep.as_ref())?;
    for s in report.suites.iter().filter(|s| !s.passed && !s.informational) {
        info!("suite {} (mode {:?}) failed: {:e} > {:e}", s.name, s.mode, s.measured, s.tolerance);
    }
    Ok((to_json(&report), report.passed))
}

/// Sweep with the configured test-stress anchor only.
pub fn sweep_report(cfg: &RunConfig) -> Result<SweepReport> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("epsilons", "missing (needed by sweep)"))?;
    let (g, u, f) = (&cfg.geometry, &cfg.motion, &cfg.fluid);
    let traction = traction_series(spec, g, u, f)?;
    let fits = coefficient_fits(spec, g, u, f, &traction)?;
    let gap = gap_series(spec, g, u, f, cfg.anchor)?;
    let passed = fits.iter().all(|f| f.passed) && (gap.informational || gap.passed);
    Ok(SweepReport {
        epsilons: spec.epsilons.clone(),
        quad_tol: spec.quad_tol,
        traction,
        fits,
        gap: vec![gap],
        passed,
    })
}

pub const SWEEP_HEADER: &str =
    "epsilon,mode,F1,F2,F3,T1,T2,T3,component,A,p,B,ell_1,ell_2,ell_3,ell_4,ell_5,err_proxy";

/// One row per ε and mode, then a `fit` row per mode holding the fit of its
/// leading component and the log-log slopes of the duality gap.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    let gap = &report.gap[0];
    let mut modes: Vec<Mode> = report.traction.iter().map(|t| t.mode).collect();
    modes.dedup();
    modes.sort();
    modes.dedup();
    for mode in modes {
        for (k, eps) in report.epsilons.iter().enumerate() {
            let Some(t) = report.traction.iter().find(|t| t.mode == mode && t.epsilon == *eps) else {
                continue;
            };
            let g = &gap.matrices[k];
            let ells: Vec<String> = Mode::ALL
                .iter()
                .map(|&b| cell(g.get(mode, b).map(|c| c.value)))
                .collect();
            let ft: Vec<String> = (0..6).map(|c| cell(Some(t.component(c)))).collect();
            let _ = writeln!(
                out,
                "{},{},{},,,,,{},{}",
                cell(Some(*eps)),
                mode.index(),
                ft.join(","),
                ells.join(","),
                cell(Some(g.err_proxy))
            );
        }
        let fits: Vec<_> = report.fits.iter().filter(|f| f.mode == mode).collect();
        let fit = fits
            .iter()
            .find(|f| !f.informational && f.fit.is_some())
            .or_else(|| fits.iter().find(|f| f.fit.is_some()));
        let (component, a, p, b) = match fit {
            Some(f) => {
                let r = f.fit.expect("fit present");
                (f.component.as_str(), Some(r.sign * r.a), Some(r.p), Some(r.sign * r.b))
            }
            None => ("", None, None, None),
        };
        let slopes: Vec<String> = Mode::ALL
            .iter()
            .map(|&b| {
                let s = gap
                    .slopes
                    .iter()
                    .find(|s| (s.alpha, s.beta) == (mode, b) || (s.alpha, s.beta) == (b, mode));
                cell(s.and_then(|s| s.slope))
            })
            .collect();
        let _ = writeln!(
            out,
            "fit,{},,,,,,,{component},{},{},{},{},{}",
            mode.index(),
            cell(a),
            cell(p),
            cell(b),
            slopes.join(","),
            cell(gap.err_proxy_slope)
        );
    }
    out
}

fn sweep(cfg: &RunConfig) -> Result<String> {
    let format = only_format(cfg, &[Format::Csv, Format::Json], Format::Csv)?;
    let report = sweep_report(cfg)?;
    Ok(match format {
        Format::Csv => sweep_csv(&report),
        Format::Json => to_json(&report),
    })
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    let text = args
        .config
        .as_ref()
        .map(|p| fs::read_to_string(p).map_err(|e| Error::config("config", format!("{}: {e}", p.display()))))
        .transpose()?;
    parse_config(args, text.as_deref())
}

fn dispatch(command: &Command) -> Result<(String, i32, Option<PathBuf>)> {
    let (args, fields_args) = match command {
        Command::Fields(f) => (&f.config, Some(f)),
        Command::Force(a) | Command::Resistance(a) | Command::Verify(a) | Command::Sweep(a) => (a, None),
    };
    let cfg = load(args)?;
    let (text, code) = match command {
        Command::Force(_) => (force(&cfg)?, EXIT_OK),
        Command::Resistance(_) => (resistance(&cfg)?, EXIT_OK),
        Command::Fields(_) => (fields(&cfg, fields_args.expect("fields args"))?, EXIT_OK),
        Command::Verify(_) => {
            let (text, passed) = verify(&cfg)?;
            (text, if passed { EXIT_OK } else { EXIT_INVARIANT })
        }
        Command::Sweep(_) => (sweep(&cfg)?, EXIT_OK),
    };
    Ok((text, code, cfg.path))
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok((text, code, path)) => {
            let written = match path {
                Some(p) => fs::write(&p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
                None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => code,
                Err(msg) => {
                    let _ = writeln!(stderr, "gapflow: error: {msg}");
                    EXIT_CONFIG
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "gapflow: error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(pairs: &[(&str, &str)]) -> ConfigArgs {
        let mut a = ConfigArgs::default();
        for &(k, v) in pairs {
            let v = Some(v.to_string());
            match k {
                "m" => a.m = v,
                "kappa" => a.kappa = v,
                "ellipsoid_R" => a.ellipsoid_r = v,
                "epsilon" => a.epsilon = v,
                "mu" => a.mu = v,
                "U" => a.u = v,
                "omega" => a.omega = v,
                _ => unreachable!("{k}"),
            }
        }
        a
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("not a config error: {other}"),
        }
    }

    #[test]
    fn ellipsoid_resolves_kappa() {
        let a = args(&[("m", "2"), ("ellipsoid_R", "1"), ("epsilon", "1e-4"), ("mu", "1"), ("U", "0,0,1")]);
        let cfg = parse_config(&a, None).unwrap();
        assert_eq!(cfg.geometry.kappa, 0.5);
        assert_eq!(cfg.geometry.big_r, 1.0);
        assert_eq!(cfg.geometry.r, 0.5);
        assert_eq!(cfg.motion.translation, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn rotation_needs_quadratic_profile() {
        let a = args(&[("m", "3"), ("kappa", "1"), ("epsilon", "1e-4"), ("omega", "1,0,0")]);
        assert_eq!(key_of(parse_config(&a, None).unwrap_err()), "omega");
    }

    #[test]
    fn flags_override_file() {
        let file = "# gap\nm = 2\nkappa = 0.5\nepsilon = 1e-3\nmu = 2\n";
        let a = args(&[("epsilon", "1e-5")]);
        let cfg = parse_config(&a, Some(file)).unwrap();
        assert_eq!(cfg.geometry.epsilon, 1e-5);
        assert_eq!(cfg.fluid.mu, 2.0);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(parse_config_text("m = 2\nviscosity = 1").unwrap_err()), "viscosity");
        assert_eq!(key_of(parse_config(&args(&[("m", "2"), ("kappa", "1")]), None).unwrap_err()), "epsilon");
        let both = args(&[("m", "2"), ("kappa", "1"), ("ellipsoid_R", "1"), ("epsilon", "1e-3")]);
        assert_eq!(key_of(parse_config(&both, None).unwrap_err()), "kappa");
        let bad_u = args(&[("m", "2"), ("kappa", "1"), ("epsilon", "1e-3"), ("U", "1,2")]);
        assert_eq!(key_of(parse_config(&bad_u, None).unwrap_err()), "U");
        let neg = args(&[("m", "2"), ("kappa", "1"), ("epsilon", "-1e-3")]);
        assert_eq!(key_of(parse_config(&neg, None).unwrap_err()), "epsilon");
        let sweep = "m = 2\nkappa = 1\nepsilon = 1e-3\nepsilons = 1e-3,1e-4\n";
        assert_eq!(key_of(parse_config(&ConfigArgs::default(), Some(sweep)).unwrap_err()), "epsilons");
    }

    #[test]
    fn fit_model_names() {
        assert_eq!(fit_model("auto").unwrap(), None);
        assert_eq!(fit_model("power_plus_log:1").unwrap(), Some(FitModel::PowerPlusLog { exponent: Some(1.0) }));
        assert!(fit_model("spline").is_err());
    }

    #[test]
    fn json_floats_keep_seventeen_digits() {
        let text = to_json(&[0.1_f64, f64::NAN, -3.0]);
        let back: Vec<Option<f64>> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vec![Some(0.1), None, Some(-3.0)]);
        assert!(text.contains("1.0000000000000001e-1"));
    }
}
