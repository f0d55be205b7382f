//! Command implementations behind the `rigidlab` binary.
//!
//! Every command returns its rendered output and an exit code; `main` only
//! parses arguments and writes the result where it was asked to go.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use rigidlab_core::analysis::{
    affine_equivariance_residual, obstruction_initial, poincare_residual_initial, propagator_fd_check,
    rigidity_residual, seed_recovery_residual, self_dilatation_residual, twisted_multiplicativity_residual,
};
use rigidlab_core::fields::{fmt_real, leaf_sample, sample_grid, shock_trace, FieldError};
use rigidlab_core::solver::solve;
use rigidlab_core::{FDConfig, GridSpec, PerturbationSpec, SeedError, SeedSpec, SolverConfig, SpectralSample};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("cannot read config {path}: {source}")]
    Config { path: PathBuf, source: Box<dyn std::error::Error + Send + Sync> },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Rigidity,
    Dilatation,
    Obstruction,
    Propagator,
    Equivariance,
    All,
}

/// Seeds and grids may be written either in shell syntax or as objects.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Textual<T> {
    Text(String),
    Value(T),
}

impl<T: FromStr> Textual<T>
where
    CliError: From<T::Err>,
{
    fn resolve(self) -> Result<T, CliError> {
        match self {
            Textual::Text(s) => Ok(s.parse()?),
            Textual::Value(v) => Ok(v),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: Option<Textual<SeedSpec>>,
    solver: Option<SolverConfig>,
    fd: Option<FDConfig>,
    grid: Option<Textual<GridSpec>>,
    output_format: Option<OutputFormat>,
    output_path: Option<PathBuf>,
}

/// Settings shared by all commands: config file values, with flags on top.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: SeedSpec,
    pub solver: SolverConfig,
    pub fd: FDConfig,
    pub grid: Option<GridSpec>,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

/// Values given on the command line; `None` defers to the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<String>,
    pub grid: Option<String>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        let file = match &o.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config { path: path.clone(), source: Box::new(e) })?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| CliError::Config { path: path.clone(), source: Box::new(e) })?
            }
            None => ConfigFile::default(),
        };
        let seed = match (&o.seed, file.seed) {
            (Some(s), _) => s.parse()?,
            (None, Some(s)) => s.resolve()?,
            (None, None) => return Err(CliError::Usage("no seed given (use --seed or the config file)".into())),
        };
        let grid = match (&o.grid, file.grid) {
            (Some(g), _) => Some(g.parse()?),
            (None, Some(g)) => Some(g.resolve()?),
            (None, None) => None,
        };
        let solver = file.solver.unwrap_or_default();
        solver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let fd = file.fd.unwrap_or_default();
        if !(fd.step > 0.0 && fd.step.is_finite()) {
            return Err(CliError::Usage(format!("fd.step must be > 0, got {}", fd.step)));
        }
        Ok(RunConfig {
            seed,
            solver,
            fd,
            grid,
            output_format: o.format.or(file.output_format).unwrap_or_default(),
            output_path: o.out.clone().or(file.output_path),
        })
    }

    fn require_grid(&self) -> Result<&GridSpec, CliError> {
        self.grid.as_ref().ok_or_else(|| CliError::Usage("this command needs a grid (use --grid or the config file)".into()))
    }
}

/// Rendered output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub body: String,
    pub exit_code: i32,
}

impl Report {
    fn ok(body: String) -> Self {
        Report { body, exit_code: EXIT_OK }
    }
}

/// Write to `path`, or standard output when absent.
pub fn emit(report: &Report, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, &report.body).map_err(|source| CliError::Write { path: p.to_path_buf(), source }),
        None => {
            print!("{}", report.body);
            Ok(())
        }
    }
}

fn raw(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() { fmt_real(v) } else { "null".into() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

fn raw_pair(z: Complex64) -> [Box<RawValue>; 2] {
    [raw(z.re), raw(z.im)]
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct StatusOut {
    outcome: &'static str,
    jacobian_modulus: Box<RawValue>,
    im_lambda: Box<RawValue>,
}

#[derive(Serialize)]
struct EvalOut {
    seed: String,
    x: Box<RawValue>,
    y: Box<RawValue>,
    lambda: Option<[Box<RawValue>; 2]>,
    w0: Option<[Box<RawValue>; 2]>,
    jac: Option<[Box<RawValue>; 2]>,
    mu: Option<[Box<RawValue>; 2]>,
    alpha: Option<Box<RawValue>>,
    beta: Option<Box<RawValue>>,
    delta_disc: Option<Box<RawValue>>,
    status: StatusOut,
}

pub fn cmd_eval(cfg: &RunConfig, x: f64, y: f64) -> Report {
    let s = SpectralSample::solve(&cfg.seed, x, y, &cfg.solver);
    let g = s.geometry.as_ref();
    let out = EvalOut {
        seed: cfg.seed.to_string(),
        x: raw(x),
        y: raw(y),
        lambda: g.map(|g| raw_pair(g.lambda)),
        w0: g.map(|g| raw_pair(g.w0)),
        jac: g.map(|g| raw_pair(g.jac)),
        mu: g.map(|g| raw_pair(g.mu)),
        alpha: g.map(|g| raw(g.alpha)),
        beta: g.map(|g| raw(g.beta)),
        delta_disc: g.map(|g| raw(g.delta_disc)),
        status: StatusOut {
            outcome: s.status.outcome.as_str(),
            jacobian_modulus: raw(s.status.jacobian_modulus),
            im_lambda: raw(s.status.im_lambda),
        },
    };
    Report { body: pretty(&out), exit_code: if s.is_converged() { EXIT_OK } else { EXIT_SOLVER } }
}

pub fn cmd_grid(cfg: &RunConfig) -> Result<Report, CliError> {
    let field = sample_grid(&cfg.seed, cfg.require_grid()?, &cfg.solver);
    Ok(Report::ok(match cfg.output_format {
        OutputFormat::Csv => field.to_csv(),
        OutputFormat::Json => field.to_json(),
    }))
}

pub fn cmd_shock(cfg: &RunConfig) -> Result<Report, CliError> {
    let points = shock_trace(&cfg.seed, cfg.require_grid()?, &cfg.solver);
    Ok(Report::ok(match cfg.output_format {
        OutputFormat::Csv => {
            let mut out = String::from("x,y\n");
            for (x, y) in points {
                out.push_str(&format!("{},{}\n", fmt_real(x), fmt_real(y)));
            }
            out
        }
        OutputFormat::Json => pretty(&points.iter().map(|&(x, y)| [raw(x), raw(y)]).collect::<Vec<_>>()),
    }))
}

pub fn cmd_leaf(cfg: &RunConfig) -> Result<Report, CliError> {
    let leaf = leaf_sample(&cfg.seed, cfg.require_grid()?, &cfg.solver);
    Ok(Report::ok(match cfg.output_format {
        OutputFormat::Csv => {
            let mut out = String::from("re_mu,im_mu\n");
            for mu in leaf {
                out.push_str(&format!("{},{}\n", fmt_real(mu.re), fmt_real(mu.im)));
            }
            out
        }
        OutputFormat::Json => pretty(&leaf.iter().map(|&mu| raw_pair(mu)).collect::<Vec<_>>()),
    }))
}

/// One line of the `verify` report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub seed: String,
    pub point: (f64, f64),
    pub magnitude: f64,
    pub tolerance: f64,
    pub pass: bool,
}

struct Checks<'a> {
    seed: &'a SeedSpec,
    out: Vec<Check>,
}

impl Checks<'_> {
    fn push(&mut self, name: &str, point: (f64, f64), magnitude: f64, tolerance: f64) {
        self.out.push(Check {
            name: name.into(),
            seed: self.seed.to_string(),
            point,
            magnitude,
            tolerance,
            // NaN fails
            pass: magnitude < tolerance,
        });
    }

    fn fail(&mut self, name: &str, point: (f64, f64), tolerance: f64) {
        self.push(name, point, f64::INFINITY, tolerance);
    }
}

/// True where the solve converges with `|J|` well away from zero and `lambda`
/// is continuous across a small cross (this drops points on a branch cut).
fn well_posed(spec: &SeedSpec, x: f64, y: f64, solver: &SolverConfig) -> bool {
    const ARM: f64 = 1e-2;
    let healthy = |x: f64, y: f64| -> Option<Complex64> {
        let sol = solve(spec, x, y, solver).ok()?;
        (sol.status.jacobian_modulus > 0.05 && sol.lambda.im > 0.05).then_some(sol.lambda)
    };
    let Some(centre) = healthy(x, y) else { return false };
    [(ARM, 0.0), (-ARM, 0.0), (0.0, ARM), (0.0, -ARM)]
        .iter()
        .all(|&(dx, dy)| healthy(x + dx, y + dy).is_some_and(|l| (l - centre).norm() < 0.1 * (1.0 + centre.norm())))
}

/// `lambda` stays healthy and free of jumps along the segment `from -> to`.
fn path_continuous(spec: &SeedSpec, from: (f64, f64), to: (f64, f64), solver: &SolverConfig) -> bool {
    const SAMPLES: usize = 64;
    let mut prev: Option<Complex64> = None;
    for k in 0..=SAMPLES {
        let t = k as f64 / SAMPLES as f64;
        let (x, y) = (from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1));
        let Ok(sol) = solve(spec, x, y, solver) else { return false };
        if sol.status.jacobian_modulus <= 0.05 || sol.lambda.im <= 0.05 {
            return false;
        }
        if prev.is_some_and(|p| (sol.lambda - p).norm() > 0.1 * (1.0 + p.norm())) {
            return false;
        }
        prev = Some(sol.lambda);
    }
    well_posed(spec, to.0, to.1, solver)
}

/// Built-in probe points: a small window around the initial slice.
fn probe_points(spec: &SeedSpec, solver: &SolverConfig) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for y in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        for x in [-0.4, -0.2, 0.0, 0.2, 0.4] {
            if well_posed(spec, x, y, solver) {
                pts.push((x, y));
            }
        }
    }
    pts
}

pub const RIGIDITY_TOL: f64 = 1e-6;
pub const OBSTRUCTION_TOL: f64 = 1e-5;
pub const POINCARE_TOL: f64 = 1e-4;
pub const PROPAGATOR_FD_TOL: f64 = 1e-5;
pub const MULTIPLICATIVITY_TOL: f64 = 1e-12;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
pub const RECOVERY_TOL: f64 = 1e-13;

fn rigidity_suite(c: &mut Checks, cfg: &RunConfig, pts: &[(f64, f64)]) {
    let spec = c.seed;
    for &(x, y) in pts {
        if spec.is_holomorphic() {
            match rigidity_residual(spec, x, y, &cfg.fd, &cfg.solver) {
                Ok(r) => c.push("rigidity", (x, y), r.magnitude, RIGIDITY_TOL),
                Err(_) => c.fail("rigidity", (x, y), RIGIDITY_TOL),
            }
        } else if x == 0.0 {
            // Not rigid; the obstruction must match its initial-slice formula instead.
            obstruction_check(c, cfg, y);
        }
    }
}

fn obstruction_check(c: &mut Checks, cfg: &RunConfig, y: f64) {
    let spec = c.seed;
    let h = rigidity_residual(spec, 0.0, y, &cfg.fd, &cfg.solver);
    match (h, obstruction_initial(spec, y)) {
        (Ok(r), Ok(h0)) => c.push("obstruction", (0.0, y), (r.value - h0).norm(), OBSTRUCTION_TOL),
        _ => c.fail("obstruction", (0.0, y), OBSTRUCTION_TOL),
    }
}

fn dilatation_suite(c: &mut Checks, cfg: &RunConfig, pts: &[(f64, f64)]) {
    let spec = c.seed;
    for &(x, y) in pts {
        let r = self_dilatation_residual(spec, x, y, &cfg.fd, &cfg.solver);
        if spec.is_holomorphic() {
            match r {
                Ok(r) => c.push("self_dilatation", (x, y), r.magnitude, RIGIDITY_TOL),
                Err(_) => c.fail("self_dilatation", (x, y), RIGIDITY_TOL),
            }
        } else {
            // Both residuals vanish together or not at all.
            let h = rigidity_residual(spec, x, y, &cfg.fd, &cfg.solver);
            match (r, h) {
                (Ok(r), Ok(h)) => {
                    let agree = (r.magnitude < RIGIDITY_TOL) == (h.magnitude < RIGIDITY_TOL);
                    c.out.push(Check {
                        name: "dilatation_rigidity_equivalence".into(),
                        seed: spec.to_string(),
                        point: (x, y),
                        magnitude: r.magnitude,
                        tolerance: RIGIDITY_TOL,
                        pass: agree,
                    });
                }
                _ => c.fail("dilatation_rigidity_equivalence", (x, y), RIGIDITY_TOL),
            }
        }
    }
}

fn obstruction_suite(c: &mut Checks, cfg: &RunConfig) {
    for y in [-1.0, 0.0, 1.0] {
        obstruction_check(c, cfg, y);
        match poincare_residual_initial(c.seed, y, &cfg.fd, &cfg.solver) {
            Ok(r) => c.push("poincare_initial", (0.0, y), (r.detail["R_fd"] - r.value).norm(), POINCARE_TOL),
            Err(_) => c.fail("poincare_initial", (0.0, y), POINCARE_TOL),
        }
    }
}

fn propagator_suite(c: &mut Checks, cfg: &RunConfig, pts: &[(f64, f64)]) {
    let spec = c.seed;
    let id = PerturbationSpec::IdentityFn;
    let square = PerturbationSpec::MonomialFn { coeff: Complex64::new(1.0, 0.0), degree: 2 };
    for &(x, y) in pts {
        // h(w0)/J is the derivative of the transform only for holomorphic seeds.
        if spec.is_holomorphic() {
            match propagator_fd_check(spec, &id, x, y, 1e-6, &cfg.solver) {
                Ok(r) => c.push("propagator_fd", (x, y), r.magnitude, PROPAGATOR_FD_TOL),
                Err(_) => c.fail("propagator_fd", (x, y), PROPAGATOR_FD_TOL),
            }
        }
        match twisted_multiplicativity_residual(spec, &id, &square, x, y, &cfg.solver) {
            Ok(r) => {
                let scale = 1.0 + r.detail["P12"].norm();
                c.push("twisted_multiplicativity", (x, y), r.magnitude / scale, MULTIPLICATIVITY_TOL)
            }
            Err(_) => c.fail("twisted_multiplicativity", (x, y), MULTIPLICATIVITY_TOL),
        }
    }
}

fn equivariance_suite(c: &mut Checks, cfg: &RunConfig, pts: &[(f64, f64)]) {
    let spec = c.seed;
    for &(x, y) in pts {
        for (a, b) in [(2.0, 0.0), (1.0, 3.0), (0.5, -1.0)] {
            // The left side marches along (a t, y - b t) in the original
            // coordinates; past a shock the two sides may sit on different sheets.
            if !path_continuous(spec, (0.0, y), (a * x, y - b * x), &cfg.solver) {
                continue;
            }
            let name = format!("affine_equivariance(a={a},b={b})");
            match affine_equivariance_residual(spec, a, b, x, y, &cfg.solver) {
                Ok(r) => {
                    let scale = 1.0 + r.detail["left"].norm();
                    c.push(&name, (x, y), r.magnitude / scale, EQUIVARIANCE_TOL)
                }
                Err(_) => c.fail(&name, (x, y), EQUIVARIANCE_TOL),
            }
        }
    }
}

fn recovery_check(c: &mut Checks, cfg: &RunConfig) {
    let spec = c.seed;
    let ys: Vec<f64> = (0..41)
        .map(|k| -2.0 + 0.1 * k as f64)
        .filter(|&y| spec.domain_contains(Complex64::new(y, 0.0)))
        .collect();
    match seed_recovery_residual(spec, &ys, &cfg.solver) {
        Ok(m) => c.push("seed_recovery", (0.0, 0.0), m, RECOVERY_TOL),
        Err(_) => c.fail("seed_recovery", (0.0, 0.0), RECOVERY_TOL),
    }
}

pub fn run_suite(cfg: &RunConfig, suite: Suite) -> Vec<Check> {
    let pts = probe_points(&cfg.seed, &cfg.solver);
    let mut c = Checks { seed: &cfg.seed, out: Vec::new() };
    let all = suite == Suite::All;
    if all || suite == Suite::Rigidity {
        rigidity_suite(&mut c, cfg, &pts);
    }
    if all || suite == Suite::Dilatation {
        dilatation_suite(&mut c, cfg, &pts);
    }
    if all || suite == Suite::Obstruction {
        obstruction_suite(&mut c, cfg);
    }
    if all || suite == Suite::Propagator {
        propagator_suite(&mut c, cfg, &pts);
    }
    if all || suite == Suite::Equivariance {
        equivariance_suite(&mut c, cfg, &pts);
    }
    if all {
        recovery_check(&mut c, cfg);
    }
    c.out
}

#[derive(Serialize)]
struct CheckOut<'a> {
    name: &'a str,
    seed: &'a str,
    point: [Box<RawValue>; 2],
    magnitude: Box<RawValue>,
    tolerance: Box<RawValue>,
    pass: bool,
}

pub fn cmd_verify(cfg: &RunConfig, suite: Suite) -> Report {
    let checks = run_suite(cfg, suite);
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    let out: Vec<CheckOut> = checks
        .iter()
        .map(|c| CheckOut {
            name: &c.name,
            seed: &c.seed,
            point: [raw(c.point.0), raw(c.point.1)],
            // An infinite magnitude marks a check that could not be evaluated.
            magnitude: raw(c.magnitude),
            tolerance: raw(c.tolerance),
            pass: c.pass,
        })
        .collect();
    Report { body: pretty(&out), exit_code: if pass { EXIT_OK } else { EXIT_VERIFY } }
}

/// Cap rayon's pool from `RIGIDLAB_THREADS` if it is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("RIGIDLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("RIGIDLAB_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}
