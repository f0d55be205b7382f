//! Pointwise geometry derived from `lambda`, grid sampling and export, and shock tracing.
//!
//! Grid samples are stored row-major with `y` as the slow index: sample
//! `j * nx + i` sits at `(x_i, y_j)`.

use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::seeds::{SeedKind, SeedSpec};
use crate::solver::{characteristic_coordinate, solve, Outcome, Solution, SolveStatus, SolverConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);

pub const CSV_HEADER: &str = "x,y,re_lambda,im_lambda,re_mu,im_mu,alpha,beta,delta_disc,abs_jac,status";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("Cayley map has a pole at lambda = -i")]
    PoleAtMinusI,
    #[error("inverse Cayley map has a pole at mu = 1")]
    PoleAtOne,
    #[error("no closed form for the {0} seed")]
    UnsupportedFamily(&'static str),
    #[error("({x}, {y}) lies outside the transform's domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("malformed field data: {0}")]
    Malformed(String),
}

/// `mu = (lambda - i) / (lambda + i)`.
pub fn cayley(lambda: Complex64) -> Result<Complex64, FieldError> {
    let den = lambda + I;
    if den.re == 0.0 && den.im == 0.0 {
        return Err(FieldError::PoleAtMinusI);
    }
    Ok((lambda - I) / den)
}

/// `lambda = i (1 + mu) / (1 - mu)`.
pub fn inverse_cayley(mu: Complex64) -> Result<Complex64, FieldError> {
    let den = 1.0 - mu;
    if den.re == 0.0 && den.im == 0.0 {
        return Err(FieldError::PoleAtOne);
    }
    Ok(I * (1.0 + mu) / den)
}

/// `(alpha, beta, Delta) = (|lambda|^2, -2 Re lambda, 4 alpha - beta^2)`.
///
/// `Delta` is evaluated as `4 (Im lambda)^2`, which is the same quantity without
/// the cancellation.
pub fn structure_map(lambda: Complex64) -> (f64, f64, f64) {
    (lambda.norm_sqr(), -2.0 * lambda.re, 4.0 * lambda.im * lambda.im)
}

/// `|mu|^2` from the family's closed form.
pub fn beltrami_modulus_closed_form(spec: &SeedSpec, x: f64, y: f64) -> Result<f64, FieldError> {
    match spec.kind() {
        SeedKind::Epsilon { eps } => {
            let d = 4.0 * (1.0 - eps * x) - eps * eps * y * y;
            if !(d > 0.0 && eps * x < 1.0) {
                return Err(FieldError::OutsideDomain { x, y });
            }
            let s = 2.0 - eps * x;
            Ok((s - d.sqrt()) / (s + d.sqrt()))
        }
        SeedKind::AffineDelta { delta } => {
            if x.is_nan() || x <= -1.0 {
                return Err(FieldError::OutsideDomain { x, y });
            }
            let lo = delta - 1.0 - x;
            let hi = delta + 1.0 + x;
            Ok((y * y + lo * lo) / (y * y + hi * hi))
        }
        SeedKind::CauchyKernel { delta } if x == 0.0 => {
            Ok(((delta - 1.0).powi(2) + y * y) / ((delta + 1.0).powi(2) + y * y))
        }
        _ => Err(FieldError::UnsupportedFamily(spec.family().name())),
    }
}

/// Closed-form membership in the transform's domain.
pub fn domain_contains(spec: &SeedSpec, x: f64, y: f64) -> Result<bool, FieldError> {
    Ok(match spec.kind() {
        SeedKind::Constant { .. } | SeedKind::Exponential => true,
        SeedKind::AffineDelta { .. } => x > -1.0,
        SeedKind::GenericAffine { slope, .. } => 1.0 + slope * x > 0.0,
        SeedKind::Epsilon { eps } => eps * eps * y * y < 4.0 * (1.0 - eps * x),
        SeedKind::CauchyKernel { delta } => !(x == delta * delta / 4.0 && y == 0.0),
        SeedKind::NonHoloTest { .. } => return Err(FieldError::UnsupportedFamily(spec.family().name())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    nx: usize,
    ny: usize,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = FieldError;
    fn try_from(r: RawGrid) -> Result<Self, FieldError> {
        GridSpec::new((r.x_min, r.x_max, r.nx), (r.y_min, r.y_max, r.ny))
    }
}

impl GridSpec {
    pub fn new(x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<Self, FieldError> {
        let g = GridSpec { x_min: x.0, x_max: x.1, nx: x.2, y_min: y.0, y_max: y.1, ny: y.2 };
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max) {
            return Err(FieldError::InvalidGrid(format!("need x_min < x_max, got {} and {}", g.x_min, g.x_max)));
        }
        if !(g.y_min.is_finite() && g.y_max.is_finite() && g.y_min < g.y_max) {
            return Err(FieldError::InvalidGrid(format!("need y_min < y_max, got {} and {}", g.y_min, g.y_max)));
        }
        if g.nx < 2 || g.ny < 2 {
            return Err(FieldError::InvalidGrid(format!("need at least 2 nodes per axis, got {}x{}", g.nx, g.ny)));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        node(self.x_min, self.x_max, self.nx, i)
    }

    pub fn y(&self, j: usize) -> f64 {
        node(self.y_min, self.y_max, self.ny, j)
    }

    /// Coordinates of sample `k` in row-major order.
    pub fn point(&self, k: usize) -> (f64, f64) {
        (self.x(k % self.nx), self.y(k / self.nx))
    }
}

fn node(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
    }
}

/// `"x0:x1:nx,y0:y1:ny"`.
impl FromStr for GridSpec {
    type Err = FieldError;
    fn from_str(s: &str) -> Result<Self, FieldError> {
        let bad = || FieldError::InvalidGrid(format!("expected x0:x1:nx,y0:y1:ny, got `{s}`"));
        let axis = |part: &str| -> Result<(f64, f64, usize), FieldError> {
            let f: Vec<&str> = part.split(':').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad());
            }
            Ok((f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?))
        };
        let (xs, ys) = s.split_once(',').ok_or_else(bad)?;
        GridSpec::new(axis(xs)?, axis(ys)?)
    }
}

/// Everything that follows from a converged `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub lambda: Complex64,
    pub w0: Complex64,
    pub jac: Complex64,
    pub mu: Complex64,
    pub alpha: f64,
    pub beta: f64,
    pub delta_disc: f64,
}

impl Geometry {
    /// The only place the derived quantities are computed.
    pub fn derive(x: f64, y: f64, lambda: Complex64, jac: Complex64) -> Self {
        let (alpha, beta, delta_disc) = structure_map(lambda);
        // Converged roots have Im lambda > 0, so the pole is out of reach.
        let mu = cayley(lambda).unwrap_or(Complex64::new(f64::INFINITY, 0.0));
        Geometry { lambda, w0: characteristic_coordinate(lambda, x, y), jac, mu, alpha, beta, delta_disc }
    }
}

/// One grid node. `geometry` is present exactly when the solve converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSample {
    pub x: f64,
    pub y: f64,
    pub status: SolveStatus,
    pub geometry: Option<Geometry>,
}

impl SpectralSample {
    pub fn from_solution(x: f64, y: f64, sol: &Solution) -> Self {
        SpectralSample { x, y, status: sol.status, geometry: Some(Geometry::derive(x, y, sol.lambda, sol.jacobian)) }
    }

    pub fn solve(spec: &SeedSpec, x: f64, y: f64, cfg: &SolverConfig) -> Self {
        match solve(spec, x, y, cfg) {
            Ok(sol) => Self::from_solution(x, y, &sol),
            Err(e) => SpectralSample { x, y, status: e.status(), geometry: None },
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status.outcome == Outcome::Converged
    }

    pub fn lambda(&self) -> Option<Complex64> {
        self.geometry.map(|g| g.lambda)
    }

    pub fn mu(&self) -> Option<Complex64> {
        self.geometry.map(|g| g.mu)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    seed: SeedSpec,
    samples: Vec<SpectralSample>,
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn raw(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() { fmt_real(v) } else { "null".to_string() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

fn raw_pair(z: Complex64) -> [Box<RawValue>; 2] {
    [raw(z.re), raw(z.im)]
}

#[derive(Serialize)]
struct SampleOut {
    x: Box<RawValue>,
    y: Box<RawValue>,
    status: &'static str,
    abs_jac: Box<RawValue>,
    im_lambda: Box<RawValue>,
    lambda: Option<[Box<RawValue>; 2]>,
    w0: Option<[Box<RawValue>; 2]>,
    jac: Option<[Box<RawValue>; 2]>,
    mu: Option<[Box<RawValue>; 2]>,
    alpha: Option<Box<RawValue>>,
    beta: Option<Box<RawValue>>,
    delta_disc: Option<Box<RawValue>>,
}

#[derive(Serialize)]
struct FieldOut<'a> {
    grid: &'a GridSpec,
    seed: &'a SeedSpec,
    samples: Vec<SampleOut>,
}

#[derive(Deserialize)]
struct SampleIn {
    x: f64,
    y: f64,
    status: String,
    abs_jac: f64,
    im_lambda: f64,
    lambda: Option<[f64; 2]>,
    jac: Option<[f64; 2]>,
}

#[derive(Deserialize)]
struct FieldIn {
    grid: GridSpec,
    seed: SeedSpec,
    samples: Vec<SampleIn>,
}

impl GridField {
    pub fn new(grid: GridSpec, seed: SeedSpec, samples: Vec<SpectralSample>) -> Result<Self, FieldError> {
        if samples.len() != grid.len() {
            return Err(FieldError::Malformed(format!("{} samples for a {}x{} grid", samples.len(), grid.nx, grid.ny)));
        }
        Ok(GridField { grid, seed, samples })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn seed(&self) -> &SeedSpec {
        &self.seed
    }

    pub fn samples(&self) -> &[SpectralSample] {
        &self.samples
    }

    /// Sample at column `i`, row `j`.
    pub fn at(&self, i: usize, j: usize) -> &SpectralSample {
        &self.samples[j * self.grid.nx + i]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{},", fmt_real(s.x), fmt_real(s.y));
            match &s.geometry {
                Some(g) => {
                    let cells = [g.lambda.re, g.lambda.im, g.mu.re, g.mu.im, g.alpha, g.beta, g.delta_disc];
                    for v in cells {
                        out.push_str(&fmt_real(v));
                        out.push(',');
                    }
                }
                None => out.push_str(",,,,,,,"),
            }
            let _ = writeln!(out, "{},{}", fmt_real(s.status.jacobian_modulus), s.status.outcome);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let g = s.geometry.as_ref();
                SampleOut {
                    x: raw(s.x),
                    y: raw(s.y),
                    status: s.status.outcome.as_str(),
                    abs_jac: raw(s.status.jacobian_modulus),
                    im_lambda: raw(s.status.im_lambda),
                    lambda: g.map(|g| raw_pair(g.lambda)),
                    w0: g.map(|g| raw_pair(g.w0)),
                    jac: g.map(|g| raw_pair(g.jac)),
                    mu: g.map(|g| raw_pair(g.mu)),
                    alpha: g.map(|g| raw(g.alpha)),
                    beta: g.map(|g| raw(g.beta)),
                    delta_disc: g.map(|g| raw(g.delta_disc)),
                }
            })
            .collect();
        let out = FieldOut { grid: &self.grid, seed: &self.seed, samples };
        let mut text = serde_json::to_string(&out).expect("field serializes");
        text.push('\n');
        text
    }

    /// Inverse of [`GridField::to_json`]. Derived quantities are recomputed
    /// from the stored `lambda` and `jac`.
    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let parsed: FieldIn = serde_json::from_str(text).map_err(|e| FieldError::Malformed(e.to_string()))?;
        let samples = parsed
            .samples
            .into_iter()
            .map(|s| {
                let outcome = Outcome::parse(&s.status)
                    .ok_or_else(|| FieldError::Malformed(format!("unknown status `{}`", s.status)))?;
                let status = SolveStatus { outcome, jacobian_modulus: s.abs_jac, im_lambda: s.im_lambda };
                let geometry = match (outcome, s.lambda, s.jac) {
                    (Outcome::Converged, Some(l), Some(j)) => {
                        Some(Geometry::derive(s.x, s.y, Complex64::new(l[0], l[1]), Complex64::new(j[0], j[1])))
                    }
                    (Outcome::Converged, _, _) => {
                        return Err(FieldError::Malformed(format!("converged sample at ({}, {}) lacks lambda", s.x, s.y)))
                    }
                    _ => None,
                };
                Ok(SpectralSample { x: s.x, y: s.y, status, geometry })
            })
            .collect::<Result<Vec<_>, _>>()?;
        GridField::new(parsed.grid, parsed.seed, samples)
    }
}

/// Solve every node; failures are kept with their status.
pub fn sample_grid(spec: &SeedSpec, grid: &GridSpec, cfg: &SolverConfig) -> GridField {
    let samples = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = grid.point(k);
            SpectralSample::solve(spec, x, y, cfg)
        })
        .collect();
    GridField { grid: *grid, seed: *spec, samples }
}

/// `mu` at every converged node.
pub fn leaf_sample(spec: &SeedSpec, grid: &GridSpec, cfg: &SolverConfig) -> Vec<Complex64> {
    sample_grid(spec, grid, cfg).samples.iter().filter_map(SpectralSample::mu).collect()
}

/// `|J|` at one point, with shocks counted as zero and other failures as absent.
fn probe(spec: &SeedSpec, x: f64, y: f64, cfg: &SolverConfig) -> Option<f64> {
    let s = SpectralSample::solve(spec, x, y, cfg);
    match s.status.outcome {
        Outcome::Converged => Some(s.status.jacobian_modulus),
        Outcome::Shock => Some(0.0),
        _ => None,
    }
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;
const EDGE_TOL: f64 = 1e-13;

/// Points where `J = 0` in the window, found along grid edges.
///
/// An edge whose ends are one converged and one shocked node is bisected on
/// the status. An edge whose midpoint has smaller `|J|` than both ends is
/// searched for its interior minimum by golden section, which catches shocks
/// that are isolated points rather than curves (the grid needs a line
/// through such a point). Shocked nodes with no shocked neighbour are
/// reported as they are. A candidate is kept when `|J| < 10 shock_tol`.
pub fn shock_trace(spec: &SeedSpec, grid: &GridSpec, cfg: &SolverConfig) -> Vec<(f64, f64)> {
    let field = sample_grid(spec, grid, cfg);
    let accept = 10.0 * cfg.shock_tol;
    let (nx, ny) = (grid.nx, grid.ny);
    let mut edges = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                edges.push(((i, j), (i + 1, j)));
            }
            if j + 1 < ny {
                edges.push(((i, j), (i, j + 1)));
            }
        }
    }
    let mut points: Vec<(f64, f64)> = edges
        .par_iter()
        .filter_map(|&(a, b)| {
            let (sa, sb) = (field.at(a.0, a.1), field.at(b.0, b.1));
            refine_edge(spec, sa, sb, cfg).filter(|&(_, _, jm)| jm < accept).map(|(x, y, _)| (x, y))
        })
        .collect();
    for j in 0..ny {
        for i in 0..nx {
            let s = field.at(i, j);
            if s.status.outcome != Outcome::Shock {
                continue;
            }
            let isolated = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().all(|&(di, dj)| {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                    return true;
                }
                field.at(ii as usize, jj as usize).status.outcome != Outcome::Shock
            });
            if isolated {
                points.push((s.x, s.y));
            }
        }
    }
    points
}

fn refine_edge(spec: &SeedSpec, a: &SpectralSample, b: &SpectralSample, cfg: &SolverConfig) -> Option<(f64, f64, f64)> {
    let at = |t: f64| (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
    let (oa, ob) = (a.status.outcome, b.status.outcome);
    if (oa == Outcome::Converged && ob == Outcome::Shock) || (oa == Outcome::Shock && ob == Outcome::Converged) {
        // t_good stays on the converged side.
        let (mut t_good, mut t_bad): (f64, f64) = if oa == Outcome::Converged { (0.0, 1.0) } else { (1.0, 0.0) };
        let mut jm = if oa == Outcome::Converged { a.status.jacobian_modulus } else { b.status.jacobian_modulus };
        while (t_bad - t_good).abs() * edge_length(a, b) > EDGE_TOL {
            let t = 0.5 * (t_good + t_bad);
            let (x, y) = at(t);
            match probe(spec, x, y, cfg) {
                Some(m) if m > 0.0 => {
                    t_good = t;
                    jm = m;
                }
                Some(_) => t_bad = t,
                None => return None,
            }
        }
        let (x, y) = at(t_good);
        return Some((x, y, jm));
    }
    if oa != Outcome::Converged || ob != Outcome::Converged {
        return None;
    }
    let (fa, fb) = (a.status.jacobian_modulus, b.status.jacobian_modulus);
    let (xm, ym) = at(0.5);
    let fm = probe(spec, xm, ym, cfg)?;
    if !(fm < fa && fm < fb) {
        return None;
    }
    if fm == 0.0 {
        return Some((xm, ym, 0.0));
    }
    golden_minimum(|t| {
        let (x, y) = at(t);
        probe(spec, x, y, cfg)
    }, edge_length(a, b))
    .map(|(t, f)| {
        let (x, y) = at(t);
        (x, y, f)
    })
}

fn edge_length(a: &SpectralSample, b: &SpectralSample) -> f64 {
    (b.x - a.x).hypot(b.y - a.y)
}

/// Golden-section search for the minimum of `f` on `[0, 1]`; stops early on an exact zero.
fn golden_minimum(f: impl Fn(f64) -> Option<f64>, length: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut t1 = lo + GOLDEN * (hi - lo);
    let mut t2 = hi - GOLDEN * (hi - lo);
    let mut f1 = f(t1)?;
    let mut f2 = f(t2)?;
    while (hi - lo) * length > EDGE_TOL {
        if f1 == 0.0 {
            return Some((t1, 0.0));
        }
        if f2 == 0.0 {
            return Some((t2, 0.0));
        }
        if f1 < f2 {
            hi = t2;
            t2 = t1;
            f2 = f1;
            t1 = lo + GOLDEN * (hi - lo);
            f1 = f(t1)?;
        } else {
            lo = t1;
            t1 = t2;
            f1 = f2;
            t2 = hi - GOLDEN * (hi - lo);
            f2 = f(t2)?;
        }
    }
    Some(if f1 < f2 { (t1, f1) } else { (t2, f2) })
}
