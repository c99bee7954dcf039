//! Command-line front end.
//!
//! Every subcommand reads the same flat parameter set from flags and an
//! optional TOML file (`--config`); flags win. Each command accepts only the
//! keys it uses, fills defaults, and embeds the resolved parameters in its
//! JSON output. Exit status: 0 success, 2 configuration error, 3 numeric
//! failure, 4 tolerance violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::green::{coeff_table, GreenModel};
use crate::io::{curve_csv, write_text};
use crate::laurent::{CMatrix, LaurentCocycle};
use crate::prodist::{evaluate, EvalOptions, FieldTable, ProDistribution};
use crate::selftest;
use crate::spectral::{
    assemble_laplacian, direct_variation_trace, eigen_spectrum, family_variation_trace, zero_cutoff, Generator,
};
use crate::surface::{build_surface, bump_function, DiscretizedSurface, Model};
use crate::symplectic::{harmonic_reduce, omega_contour_oracle, omega_series};
use crate::zeta::{default_exponents, parse_exponents, zeta_from_source, ThetaSource};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(Error),
    Tolerance(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Tolerance(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(e) => write!(f, "numeric failure: {e}"),
            CliError::Tolerance(m) => write!(f, "tolerance violated: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) | Error::Parse(m) | Error::Unsupported(m) => CliError::Config(m),
            other => CliError::Numeric(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Flat parameter set shared by all subcommands.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Surface model: disc or torus.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// rank1 (scalar exponential) or rank2 (Hermitian).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    /// zero, constant:c, gaussian:sigma, linear:a,b or file:path.json.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Heat-trace exponents, e.g. "-1,-1/2,0,1/2,1".
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<String>,
    /// Fit window "a,b" in t.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
    /// Number of eigenvalues to report.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Expansion circle radius for coefficient tables.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Use the contour-differentiated kernel instead of the closed form.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numerical: Option<bool>,
    /// Green model for pairings: disc or torus.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub green: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f2: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    /// Prodistribution in text form, e.g. "D'_1: (1,0) * delta(1.0)/2pi".
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    /// Test function per factor: one, re, im, z, zbar, abs2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<Vec<String>>,
    /// Named field binding name=function.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Criteria to run, e.g. "1,2,5"; all when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criteria: Option<String>,
    /// theta or sweep.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Comma-separated spectrum for theta curves.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<String>,
    /// Comma-separated t values for theta curves.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<String>,
    /// Comma-separated resolutions for eigenvalue sweeps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolutions: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($name:ident),*) => {
        $( if $src.$name.is_some() { $dst.$name = $src.$name.clone(); } )*
    };
}

impl Params {
    /// Keys set in `self`, by their config name.
    fn keys(&self) -> Vec<String> {
        match serde_json::to_value(self) {
            Ok(Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// `self` overridden by every key set in `flags`.
    pub fn merged(&self, flags: &Params) -> Params {
        let mut out = self.clone();
        merge_fields!(out, flags; model, resolution, family, generator, s, eps, exponents, window, count, order,
            radius, samples, numerical, green, f1, f2, f, r1, r2, expr, test, field, tolerance, seed, criteria, kind,
            spectrum, times, resolutions, out);
        out
    }
}

#[derive(Args, Debug, Clone)]
pub struct Invocation {
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: Params,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Lowest eigenvalues of the conjugated Laplacian.
    Spectrum(Invocation),
    /// Zeta-regularized determinant.
    Det(Invocation),
    /// Variation trace against the finite-difference oracle.
    Variation(Invocation),
    /// Green coefficient table as CSV.
    GreenCoeffs(Invocation),
    /// Series pairing of two cocycles and its contour oracle.
    Omega(Invocation),
    /// Harmonic reduction on the torus.
    Reduce(Invocation),
    /// Evaluates a prodistribution on test functions.
    ProdistEval(Invocation),
    /// Runs the acceptance suite.
    Selftest(Invocation),
    /// Writes a theta curve or an eigenvalue sweep as CSV.
    ExportCurve(Invocation),
}

#[derive(Parser, Debug)]
#[command(name = "quillen", version, about = "Regularized determinants and Green-kernel pairings on model surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn load_params(inv: &Invocation) -> CliResult<Params> {
    let base = match &inv.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<Params>(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => Params::default(),
    };
    Ok(base.merged(&inv.params))
}

fn check_keys(p: &Params, command: &str, allowed: &[&str]) -> CliResult<()> {
    for key in p.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(config_err(format!("'{key}' is not a parameter of {command}")));
        }
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(format!("{name} must be positive, got {v}")))
    }
}

fn parse_list<T: std::str::FromStr>(name: &str, text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| config_err(format!("bad entry '{p}' in {name}"))))
        .collect()
}

fn model_of(p: &Params) -> CliResult<Model> {
    p.model.as_deref().unwrap_or("disc").parse::<Model>().map_err(|e| config_err(e.to_string()))
}

/// `exp(g M)` with `M = [[1, ½], [½, −1]]`, positive for every real `g`.
fn rank2_field(g: f64) -> CMatrix {
    let w = 1.25f64.sqrt();
    let (ch, sh) = ((g * w).cosh(), (g * w).sinh() / w);
    let c = |v: f64| Complex64::new(v, 0.0);
    CMatrix::from_row_slice(2, 2, &[c(ch + sh), c(0.5 * sh), c(0.5 * sh), c(ch - sh)])
}

fn generator_values(spec: &str, surface: &DiscretizedSurface) -> CliResult<Vec<f64>> {
    let nodes = surface.nodes();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| config_err(format!("bad number '{s}' in generator '{spec}'")));
    match kind {
        "zero" => Ok(vec![0.0; nodes.len()]),
        "constant" => {
            let c = num(arg)?;
            Ok(vec![c; nodes.len()])
        }
        "gaussian" => {
            let sigma = positive("gaussian width", num(arg)?)?;
            Ok(nodes.iter().map(|z| (-z.norm_sqr() / (2.0 * sigma * sigma)).exp()).collect())
        }
        "linear" => {
            let (a, b) = arg.split_once(',').ok_or_else(|| config_err("linear generator needs 'linear:a,b'"))?;
            let (a, b) = (num(a)?, num(b)?);
            Ok(nodes.iter().map(|z| a * z.re + b * z.im).collect())
        }
        "file" => {
            let text = fs::read_to_string(arg).map_err(|e| config_err(format!("cannot read {arg}: {e}")))?;
            let v: Vec<f64> = serde_json::from_str(&text).map_err(|e| config_err(format!("{arg}: {e}")))?;
            if v.len() != nodes.len() {
                return Err(config_err(format!("{arg} has {} values, the surface has {} nodes", v.len(), nodes.len())));
            }
            Ok(v)
        }
        other => Err(config_err(format!("unknown generator '{other}'"))),
    }
}

struct Family {
    surface: DiscretizedSurface,
    generator: Generator,
    s: f64,
}

const FAMILY_KEYS: [&str; 5] = ["model", "resolution", "family", "generator", "s"];

fn resolve_family(p: &mut Params) -> CliResult<Family> {
    let model = model_of(p)?;
    p.model = Some(model.to_string());
    let resolution = *p.resolution.get_or_insert(32);
    let family = p.family.get_or_insert_with(|| "rank1".into()).clone();
    let spec = p.generator.get_or_insert_with(|| "gaussian:0.5".into()).clone();
    let s = *p.s.get_or_insert(0.0);
    if !s.is_finite() {
        return Err(config_err("s must be finite"));
    }
    let surface = build_surface(model, resolution)?;
    let values = generator_values(&spec, &surface)?;
    let generator = match family.as_str() {
        "rank1" => Generator::scalar_nodes(&surface, values)?,
        "rank2" => Generator::hermitian_nodes(&surface, values.iter().map(|&g| rank2_field(g)).collect())?,
        other => return Err(config_err(format!("unknown family '{other}', expected rank1 or rank2"))),
    };
    Ok(Family { surface, generator, s })
}

fn emit_json(p: &Params, body: Value) -> CliResult<String> {
    let mut body = body;
    if let Value::Object(map) = &mut body {
        map.insert("config".into(), serde_json::to_value(p).map_err(|e| config_err(e.to_string()))?);
    }
    let text = serde_json::to_string_pretty(&body).map_err(|e| config_err(e.to_string()))? + "\n";
    deliver(p, &text)
}

/// Writes `text` to `--out` (returning a short note) or returns it for
/// stdout.
fn deliver(p: &Params, text: &str) -> CliResult<String> {
    match &p.out {
        Some(path) => {
            write_text(Path::new(path), text).map_err(|e| config_err(e.to_string()))?;
            Ok(format!("wrote {path}\n"))
        }
        None => Ok(text.to_string()),
    }
}

fn cmd_spectrum(mut p: Params) -> CliResult<String> {
    check_keys(&p, "spectrum", &[&FAMILY_KEYS[..], &["count", "out"]].concat())?;
    let fam = resolve_family(&mut p)?;
    let count = *p.count.get_or_insert(10);
    let delta = assemble_laplacian(&fam.surface, &fam.generator, fam.s)?;
    let spec = eigen_spectrum(&delta, None)?;
    let cut = spec.zero_cutoff();
    let zero_modes = spec.values.iter().filter(|&&v| v <= cut).count();
    let shown: Vec<f64> = spec.values.iter().copied().filter(|&v| v > cut).take(count).collect();
    emit_json(&p, json!({ "dimension": spec.values.len(), "zero_modes": zero_modes, "eigenvalues": shown }))
}

fn cmd_det(mut p: Params) -> CliResult<String> {
    check_keys(&p, "det", &[&FAMILY_KEYS[..], &["eps", "exponents", "window", "out"]].concat())?;
    let fam = resolve_family(&mut p)?;
    let eps = positive("eps", *p.eps.get_or_insert(0.02))?;
    let exponents = match &p.exponents {
        Some(text) => parse_exponents(text)?,
        None => default_exponents(fam.surface.model()),
    };
    p.exponents = Some(exponents.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","));
    let window_text = p.window.get_or_insert_with(|| format!("{eps},{}", 15.0 * eps)).clone();
    let w: Vec<f64> = parse_list("window", &window_text)?;
    if w.len() != 2 {
        return Err(config_err("window needs two values 'a,b'"));
    }
    let delta = assemble_laplacian(&fam.surface, &fam.generator, fam.s)?;
    let spec = eigen_spectrum(&delta, None)?;
    let cut = zero_cutoff(&spec.values);
    let values: Vec<f64> = spec.values.into_iter().filter(|&v| v > cut).collect();
    let r = zeta_from_source(&ThetaSource::Spectrum(&values), &exponents, (w[0], w[1]), eps)?;
    emit_json(
        &p,
        json!({
            "zeta_prime_0": r.zeta_prime_0,
            "det_reg": r.det_reg,
            "eps": r.eps,
            "fit": r.fit.as_map(),
            "residual": r.fit.residual,
            "halving_change": r.halving_change,
            "ledger": r.ledger,
        }),
    )
}

fn cmd_variation(mut p: Params) -> CliResult<String> {
    check_keys(&p, "variation", &[&FAMILY_KEYS[..], &["eps", "tolerance", "out"]].concat())?;
    let fam = resolve_family(&mut p)?;
    let eps = positive("eps", *p.eps.get_or_insert(0.05))?;
    let tol = positive("tolerance", *p.tolerance.get_or_insert(1e-6))?;
    let v = family_variation_trace(&fam.surface, &fam.generator, fam.s, eps)?;
    let direct = direct_variation_trace(&fam.surface, &fam.generator, fam.s, eps, 1e-4)?;
    let rel = (v.value - direct).abs() / v.value.abs().max(direct.abs()).max(f64::MIN_POSITIVE);
    let text = emit_json(
        &p,
        json!({ "variation_trace": v.value, "sections": v.sections, "forms": v.forms, "direct": direct, "rel_diff": rel }),
    )?;
    if rel > tol {
        return Err(CliError::Tolerance(format!("variation rel_diff {rel:e} exceeds {tol:e}")));
    }
    Ok(text)
}

fn green_model(p: &mut Params, key_is_green: bool) -> CliResult<GreenModel> {
    let slot = if key_is_green { &mut p.green } else { &mut p.model };
    let model: Model = slot.get_or_insert_with(|| "disc".into()).parse().map_err(|e: Error| config_err(e.to_string()))?;
    let numerical = *p.numerical.get_or_insert(false);
    Ok(if numerical { GreenModel::numerical(model) } else { GreenModel::new(model) })
}

fn table_defaults(p: &mut Params, model: Model, order: usize) {
    p.radius.get_or_insert(if model == Model::Disc { 0.5 } else { 0.15 });
    p.samples.get_or_insert((8 * (order + 1)).max(64));
}

fn cmd_green_coeffs(mut p: Params) -> CliResult<String> {
    check_keys(&p, "green-coeffs", &["model", "order", "radius", "samples", "numerical", "out"])?;
    let g = green_model(&mut p, false)?;
    let order = *p.order.get_or_insert(8);
    table_defaults(&mut p, g.model, order);
    let t = coeff_table(&g, order, p.radius.unwrap_or_default(), p.samples.unwrap_or_default())?;
    deliver(&p, &t.to_csv())
}

fn cmd_omega(mut p: Params) -> CliResult<String> {
    check_keys(&p, "omega", &["f1", "f2", "green", "order", "radius", "samples", "numerical", "tolerance", "out"])?;
    let load = |path: &Option<String>, name: &str| -> CliResult<LaurentCocycle> {
        let path = path.as_ref().ok_or_else(|| config_err(format!("omega needs --{name}")))?;
        LaurentCocycle::from_json_file(Path::new(path)).map_err(CliError::from)
    };
    let f1 = load(&p.f1, "f1")?;
    let f2 = load(&p.f2, "f2")?;
    let g = green_model(&mut p, true)?;
    let order = *p.order.get_or_insert(8);
    table_defaults(&mut p, g.model, order);
    let tol = positive("tolerance", *p.tolerance.get_or_insert(1e-6))?;
    let table = coeff_table(&g, order, p.radius.unwrap_or_default(), p.samples.unwrap_or_default())?;
    let series = omega_series(&f1, &f2, &table)?;
    let oracle = omega_contour_oracle(&f1, &f2, &GreenModel::new(g.model), 128)?;
    // a form that vanishes leaves both values at roundoff; compare against the cocycle sizes then
    let floor = 1e-6 * f1.coefficient_norm_sum() * f2.coefficient_norm_sum();
    let scale = series.abs().max(oracle.value.abs()).max(floor);
    let rel = if scale > 0.0 { (series - oracle.value).abs() / scale } else { 0.0 };
    let text = emit_json(&p, json!({ "omega_series": series, "omega_oracle": oracle.value, "rel_diff": rel }))?;
    if rel > tol {
        return Err(CliError::Tolerance(format!("omega rel_diff {rel:e} exceeds {tol:e}")));
    }
    Ok(text)
}

fn cmd_reduce(mut p: Params) -> CliResult<String> {
    check_keys(&p, "reduce", &["f", "resolution", "r1", "r2", "out"])?;
    let path = p.f.clone().ok_or_else(|| config_err("reduce needs --f"))?;
    let f = LaurentCocycle::from_json_file(Path::new(&path))?;
    let resolution = *p.resolution.get_or_insert(32);
    let r1 = *p.r1.get_or_insert(0.1);
    let r2 = *p.r2.get_or_insert(0.3);
    let surface = build_surface(Model::Torus, resolution)?;
    let rho = bump_function(&surface, r1, r2)?;
    let h = harmonic_reduce(&f, &surface, &rho, &GreenModel::new(Model::Torus))?;
    let weights = &h.alpha.weights;
    let area: f64 = weights.iter().sum();
    let mean = h.phi.iter().zip(weights).fold(CMatrix::zeros(h.rank, h.rank), |a, (m, w)| a + m * Complex64::new(*w, 0.0))
        / Complex64::new(area, 0.0);
    let rows: Vec<Vec<[f64; 2]>> = (0..h.rank).map(|i| (0..h.rank).map(|j| [mean[(i, j)].re, mean[(i, j)].im]).collect()).collect();
    emit_json(
        &p,
        json!({
            "norm": h.norm(),
            "phi_mean": rows,
            "coclosed_residual": h.coclosed_residual,
            "grid_tolerance": h.grid_tolerance,
        }),
    )
}

fn named_function(name: &str) -> CliResult<fn(Complex64) -> Complex64> {
    Ok(match name {
        "one" => |_| Complex64::new(1.0, 0.0),
        "re" => |z| Complex64::new(z.re, 0.0),
        "im" => |z| Complex64::new(z.im, 0.0),
        "z" => |z| z,
        "zbar" => |z| z.conj(),
        "abs2" => |z| Complex64::new(z.norm_sqr(), 0.0),
        other => return Err(config_err(format!("unknown function '{other}', expected one, re, im, z, zbar or abs2"))),
    })
}

fn cmd_prodist_eval(mut p: Params) -> CliResult<String> {
    check_keys(&p, "prodist-eval", &["expr", "test", "field", "model", "samples", "out"])?;
    let expr = p.expr.clone().ok_or_else(|| config_err("prodist-eval needs --expr"))?;
    let d: ProDistribution = expr.parse()?;
    let model = model_of(&p)?;
    p.model = Some(model.to_string());
    let samples = *p.samples.get_or_insert(512);
    let tests: Vec<fn(Complex64) -> Complex64> =
        p.test.clone().unwrap_or_default().iter().map(|t| named_function(t)).collect::<CliResult<_>>()?;
    let mut bound: Vec<(String, fn(Complex64) -> Complex64)> = Vec::new();
    for binding in p.field.clone().unwrap_or_default() {
        let (name, fun) = binding.split_once('=').ok_or_else(|| config_err(format!("field '{binding}' must be name=function")))?;
        bound.push((name.trim().to_string(), named_function(fun.trim())?));
    }
    let mut fields = FieldTable::new();
    for (name, fun) in &bound {
        fields.insert(name.clone(), fun);
    }
    let refs: Vec<&dyn Fn(Complex64) -> Complex64> = tests.iter().map(|t| t as &dyn Fn(Complex64) -> Complex64).collect();
    let opts = EvalOptions { model, circle_samples: samples, ..EvalOptions::default() };
    let v = evaluate(&d, &refs, &fields, &opts)?;
    emit_json(&p, json!({ "normal_form": d.normalize().to_string(), "value": [v.re, v.im] }))
}

fn cmd_selftest(mut p: Params) -> CliResult<String> {
    check_keys(&p, "selftest", &["seed", "criteria", "out"])?;
    let seed = *p.seed.get_or_insert(0);
    let ids: Vec<u8> = match &p.criteria {
        Some(text) => parse_list("criteria", text)?,
        None => (1..=11).collect(),
    };
    if let Some(bad) = ids.iter().find(|&&i| !(1..=12).contains(&i)) {
        return Err(config_err(format!("no criterion {bad}")));
    }
    let determinism = ids.contains(&12) || p.criteria.is_none();
    let ids: Vec<u8> = ids.into_iter().filter(|&i| i != 12).collect();
    let report = selftest::run(seed, &ids, determinism)?;
    let text = deliver(&p, &report.render())?;
    if !report.passed() {
        let failed: Vec<String> = report.outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
        eprint!("{}", report.render());
        return Err(CliError::Tolerance(format!("criteria {} failed", failed.join(", "))));
    }
    Ok(text)
}

fn cmd_export_curve(mut p: Params) -> CliResult<String> {
    check_keys(&p, "export-curve", &["kind", "spectrum", "times", "resolutions", "out"])?;
    let kind = p.kind.get_or_insert_with(|| "theta".into()).clone();
    let samples: Vec<(f64, f64)> = match kind.as_str() {
        "theta" => {
            let spec: Vec<f64> = parse_list("spectrum", p.spectrum.as_deref().ok_or_else(|| config_err("theta curve needs --spectrum"))?)?;
            let times: Vec<f64> = parse_list("times", p.times.as_deref().ok_or_else(|| config_err("theta curve needs --times"))?)?;
            times.iter().map(|&t| Ok((t, crate::spectral::heat_trace(&spec, t)?))).collect::<CliResult<_>>()?
        }
        "sweep" => {
            let text = p.resolutions.get_or_insert_with(|| "32,64,96".into()).clone();
            let ks: Vec<usize> = parse_list("resolutions", &text)?;
            ks.iter().map(|&k| Ok((k as f64, selftest::disc_lambda_min(k)?.1))).collect::<CliResult<_>>()?
        }
        other => return Err(config_err(format!("unknown curve kind '{other}', expected theta or sweep"))),
    };
    deliver(&p, &curve_csv(&samples)?)
}

/// Runs one parsed command and returns the text for stdout.
pub fn run(command: &Command) -> CliResult<String> {
    let (inv, handler): (&Invocation, fn(Params) -> CliResult<String>) = match command {
        Command::Spectrum(i) => (i, cmd_spectrum),
        Command::Det(i) => (i, cmd_det),
        Command::Variation(i) => (i, cmd_variation),
        Command::GreenCoeffs(i) => (i, cmd_green_coeffs),
        Command::Omega(i) => (i, cmd_omega),
        Command::Reduce(i) => (i, cmd_reduce),
        Command::ProdistEval(i) => (i, cmd_prodist_eval),
        Command::Selftest(i) => (i, cmd_selftest),
        Command::ExportCurve(i) => (i, cmd_export_curve),
    };
    handler(load_params(inv)?)
}

/// Parses the process arguments, runs, and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> Params {
        let mut args = vec!["quillen".to_string(), "spectrum".to_string()];
        for (k, v) in pairs {
            args.push(format!("--{k}"));
            args.push(v.to_string());
        }
        match Cli::try_parse_from(args).unwrap().command {
            Command::Spectrum(i) => i.params,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_file() {
        let file: Params = toml::from_str("model = \"torus\"\nresolution = 16\n").unwrap();
        let flags = params(&[("resolution", "24"), ("s", "-0.2")]);
        let m = file.merged(&flags);
        assert_eq!(m.model.as_deref(), Some("torus"));
        assert_eq!(m.resolution, Some(24));
        assert_eq!(m.s, Some(-0.2));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(toml::from_str::<Params>("colour = 3\n").is_err());
        let p = params(&[("order", "4")]);
        assert_eq!(cmd_spectrum(p).unwrap_err().exit_code(), 2);
        assert_eq!(cmd_spectrum(params(&[("model", "sphere")])).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn green_table_diagonal() {
        let mut p = Params::default();
        p.order = Some(4);
        let csv = cmd_green_coeffs(p).unwrap();
        let diag: Vec<f64> = csv
            .lines()
            .skip(1)
            .filter_map(|l| {
                let v: Vec<&str> = l.split(',').collect();
                (v[0] == v[1]).then(|| v[2].parse().unwrap())
            })
            .collect();
        for (n, d) in diag.iter().enumerate() {
            assert!((d - (n as f64 + 1.0) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn theta_curve_row() {
        let mut p = Params::default();
        p.spectrum = Some("1,2".into());
        p.times = Some(format!("{}", 2f64.ln()));
        let csv = cmd_export_curve(p).unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), "0.69314718055994529,0.75000000000000000");
    }

    #[test]
    fn spectrum_json_embeds_config() {
        let out = cmd_spectrum(params(&[("resolution", "12"), ("count", "3")])).unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 3);
        assert_eq!(v["config"]["generator"], "gaussian:0.5");
        assert_eq!(v["config"]["resolution"], 12);
    }

    #[test]
    fn prodist_eval_delta() {
        let mut p = Params::default();
        p.expr = Some("D'_1: (1,0) * delta(1.0)/2pi".into());
        p.test = Some(vec!["one".into()]);
        let v: Value = serde_json::from_str(&cmd_prodist_eval(p).unwrap()).unwrap();
        assert!((v["value"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}
