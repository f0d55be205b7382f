//! Solving `lambda = f(y - lambda x)`.
//!
//! Closed forms cover every catalog family that admits one. Everything else
//! (and every cross-check) goes through Newton's method, marched out from the
//! initial slice `x = 0` where `lambda(0, y) = f(y)`.
//!
//! Newton uses the full real-linear derivative of `F(lambda) = lambda - f(w, w̄)`,
//! `dF = A dλ + B dλ̄` with `A = 1 + f_w x` and `B = f_w̄ x`, so one iteration
//! serves holomorphic seeds (`B = 0`, `A = J`) and the non-holomorphic test seed.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lambert_w::lambert_w0_over_x;
use crate::seeds::{SeedError, SeedFunction, SeedKind, SeedSpec};

/// Continuation never refines a step below this width (relative to `1 + |x|`).
const MIN_STEP: f64 = 1e-14;
const MAX_REFINE_DEPTH: usize = 56;
/// A step is accepted only if `J` changes by less than this factor...
const MAX_JACOBIAN_RATIO: f64 = 4.0;
/// ...and turns by less than this angle.
const MAX_JACOBIAN_TURN: f64 = PI / 3.0;
/// `|J|` below which a failed step is examined as a shock.
const SHOCK_PROXIMITY: f64 = 1e-4;
/// `Im lambda / (1 + |lambda|)` below which a failed step counts as ellipticity loss.
const ELLIPTICITY_PROXIMITY: f64 = 1e-4;
/// The non-holomorphic seed is only solved on this strip.
pub const NONHOLO_MAX_ABS_X: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub shock_tol: f64,
    pub max_newton_iters: usize,
    pub continuation_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { newton_tol: 1e-13, shock_tol: 1e-10, max_newton_iters: 40, continuation_steps: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid solver configuration: {0}")]
pub struct ConfigError(pub String);

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError(format!("{name} must be > 0, got {v}")))
            }
        };
        pos("newton_tol", self.newton_tol)?;
        pos("shock_tol", self.shock_tol)?;
        if self.max_newton_iters == 0 {
            return Err(ConfigError("max_newton_iters must be > 0".into()));
        }
        if self.continuation_steps == 0 {
            return Err(ConfigError("continuation_steps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Converged,
    Shock,
    EllipticityLoss,
    OutsideSeedDomain,
    NonConvergence,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Converged => "Converged",
            Outcome::Shock => "Shock",
            Outcome::EllipticityLoss => "EllipticityLoss",
            Outcome::OutsideSeedDomain => "OutsideSeedDomain",
            Outcome::NonConvergence => "NonConvergence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Converged" => Outcome::Converged,
            "Shock" => Outcome::Shock,
            "EllipticityLoss" => Outcome::EllipticityLoss,
            "OutsideSeedDomain" => Outcome::OutsideSeedDomain,
            "NonConvergence" => Outcome::NonConvergence,
            _ => return None,
        })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStatus {
    pub outcome: Outcome,
    pub jacobian_modulus: f64,
    pub im_lambda: f64,
}

/// A converged root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    pub lambda: Complex64,
    /// `J = 1 + f_w(w0) x`
    pub jacobian: Complex64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Why a solve stopped. `lambda` is the best available estimate; for a shock
/// reached exactly it is the coalesced root.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{outcome} at x = {x_reached} (|J| = {jacobian_modulus:e}, lambda = {lambda})")]
pub struct SolveError {
    pub outcome: Outcome,
    pub lambda: Complex64,
    pub jacobian_modulus: f64,
    /// Largest `|x|` reached along the solve (the target for direct solves).
    pub x_reached: f64,
}

impl SolveError {
    fn new(outcome: Outcome, lambda: Complex64, jacobian_modulus: f64, x_reached: f64) -> Self {
        Self { outcome, lambda, jacobian_modulus, x_reached }
    }

    pub fn status(&self) -> SolveStatus {
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        SolveStatus { outcome: self.outcome, jacobian_modulus: finite(self.jacobian_modulus), im_lambda: 0.0 }
    }
}

fn converged(lambda: Complex64, jacobian: Complex64, iterations: usize) -> Solution {
    Solution {
        lambda,
        jacobian,
        iterations,
        status: SolveStatus { outcome: Outcome::Converged, jacobian_modulus: jacobian.norm(), im_lambda: lambda.im },
    }
}

fn outside(lambda: Complex64, x: f64) -> SolveError {
    SolveError::new(Outcome::OutsideSeedDomain, lambda, f64::NAN, x)
}

pub fn characteristic_coordinate(lambda: Complex64, x: f64, y: f64) -> Complex64 {
    Complex64::new(y, 0.0) - lambda * x
}

/// `J = 1 + f'(w0) x` at `w0 = y - lambda x`.
pub fn jacobian(spec: &SeedSpec, lambda: Complex64, x: f64, y: f64) -> Result<Complex64, SeedError> {
    jacobian_of(spec, lambda, x, y)
}

fn jacobian_of<S: SeedFunction + ?Sized>(seed: &S, lambda: Complex64, x: f64, y: f64) -> Result<Complex64, SeedError> {
    let e = seed.eval_at(characteristic_coordinate(lambda, x, y))?;
    Ok(1.0 + e.d_dw * x)
}

/// Classify a candidate root produced by a closed form.
fn finish(spec: &SeedSpec, lambda: Complex64, x: f64, y: f64, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    let jac = jacobian(spec, lambda, x, y).map_err(|_| outside(lambda, x))?;
    let jm = jac.norm();
    if jm < cfg.shock_tol {
        return Err(SolveError::new(Outcome::Shock, lambda, jm, x));
    }
    if lambda.im.is_nan() || lambda.im <= 0.0 {
        return Err(SolveError::new(Outcome::EllipticityLoss, lambda, jm, x));
    }
    Ok(converged(lambda, jac, 0))
}

/// `lambda(0, y) = f(y)`.
fn initial_slice<S: SeedFunction + ?Sized>(seed: &S, y: f64) -> Result<Solution, SolveError> {
    let value = seed.eval_at(Complex64::new(y, 0.0)).map_err(|_| outside(Complex64::new(0.0, 0.0), 0.0))?.value;
    if value.im.is_nan() || value.im <= 0.0 {
        return Err(SolveError::new(Outcome::EllipticityLoss, value, 1.0, 0.0));
    }
    Ok(converged(value, Complex64::new(1.0, 0.0), 0))
}

/// Closed-form transform for the catalog families that have one.
pub fn solve_closed_form(spec: &SeedSpec, x: f64, y: f64, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    if x == 0.0 {
        return initial_slice(spec, y);
    }
    match spec.kind() {
        SeedKind::Constant { c } => finish(spec, Complex64::new(0.0, c), x, y, cfg),
        SeedKind::AffineDelta { delta } => affine_closed_form(spec, 1.0, 0.0, delta, x, y, cfg),
        SeedKind::GenericAffine { slope, intercept, imag } => {
            affine_closed_form(spec, slope, intercept, imag, x, y, cfg)
        }
        SeedKind::Epsilon { eps } => {
            let q = 1.0 - eps * x;
            let disc = 4.0 * q - eps * eps * y * y;
            if q <= cfg.shock_tol {
                return Err(SolveError::new(Outcome::Shock, Complex64::new(0.0, f64::INFINITY), 0.0, x));
            }
            if disc <= 0.0 {
                let lambda = Complex64::new(-eps * y / (2.0 * q), 0.0);
                return Err(SolveError::new(Outcome::EllipticityLoss, lambda, f64::NAN, x));
            }
            let lambda = Complex64::new(-eps * y, disc.sqrt()) / (2.0 * q);
            finish(spec, lambda, x, y, cfg)
        }
        SeedKind::Exponential => finish(spec, lambert_w0_over_x(x, y), x, y, cfg),
        SeedKind::CauchyKernel { delta } => {
            let shock_x = delta * delta / 4.0;
            if (x - shock_x).hypot(y) <= cfg.shock_tol {
                return Err(SolveError::new(Outcome::Shock, Complex64::new(0.0, 2.0 / delta), 0.0, x));
            }
            finish(spec, cauchy_root(delta, x, y), x, y, cfg)
        }
        SeedKind::NonHoloTest { .. } => Err(SolveError::new(Outcome::NonConvergence, Complex64::new(0.0, 0.0), f64::NAN, x)),
    }
}

fn affine_closed_form(
    spec: &SeedSpec,
    slope: f64,
    intercept: f64,
    imag: f64,
    x: f64,
    y: f64,
    cfg: &SolverConfig,
) -> Result<Solution, SolveError> {
    let den = 1.0 + slope * x;
    let lambda = Complex64::new(slope * y + intercept, imag) / den;
    if den <= cfg.shock_tol {
        return Err(SolveError::new(Outcome::Shock, lambda, den.abs(), x));
    }
    finish(spec, lambda, x, y, cfg)
}

/// Root of `x lambda^2 - zeta lambda - 1 = 0` continuous from `lambda(0, y) = -1/zeta`.
///
/// Written as `-2 / (zeta + s)` with `s^2 = zeta^2 + 4x`; the sign of `s` is the
/// one closer to `zeta`. Along any line `y != 0` that choice never flips, so it
/// agrees with marching from the y-axis. On the post-shock ray
/// `y = 0, x > delta^2/4` the two signs tie and the principal root is kept.
fn cauchy_root(delta: f64, x: f64, y: f64) -> Complex64 {
    let zeta = Complex64::new(y, delta);
    let mut s = (zeta * zeta + 4.0 * x).sqrt();
    if (s * zeta.conj()).re < 0.0 {
        s = -s;
    }
    -2.0 / (zeta + s)
}

/// Newton on `lambda - f(y - lambda x)` from `lambda_init`.
pub fn solve_newton(
    spec: &SeedSpec,
    x: f64,
    y: f64,
    lambda_init: Complex64,
    cfg: &SolverConfig,
) -> Result<Solution, SolveError> {
    check_strip(spec, x)?;
    newton(spec, x, y, lambda_init, cfg)
}

fn check_strip(spec: &SeedSpec, x: f64) -> Result<(), SolveError> {
    if !spec.is_holomorphic() && x.abs() > NONHOLO_MAX_ABS_X {
        return Err(outside(Complex64::new(0.0, 0.0), x));
    }
    Ok(())
}

/// Generic Newton iteration, usable with any [`SeedFunction`].
pub fn newton<S: SeedFunction + ?Sized>(
    seed: &S,
    x: f64,
    y: f64,
    lambda_init: Complex64,
    cfg: &SolverConfig,
) -> Result<Solution, SolveError> {
    let mut lambda = lambda_init;
    let mut best = (f64::INFINITY, lambda, f64::NAN);
    for iteration in 0..=cfg.max_newton_iters {
        let w = characteristic_coordinate(lambda, x, y);
        let e = seed.eval_at(w).map_err(|_| outside(lambda, x))?;
        let residual = lambda - e.value;
        let a = 1.0 + e.d_dw * x;
        let b = e.d_dwbar * x;
        let det = a.norm_sqr() - b.norm_sqr();
        let jm = det.abs().sqrt();
        if jm < cfg.shock_tol {
            return Err(SolveError::new(Outcome::Shock, lambda, jm, x));
        }
        let step = (a.conj() * residual - b * residual.conj()) / det;
        let scale = 1.0 + lambda.norm();
        if residual.norm() < best.0 {
            best = (residual.norm(), lambda, jm);
        }
        if residual.norm() <= cfg.newton_tol * scale && step.norm() <= 1e3 * cfg.newton_tol * scale {
            if lambda.im.is_nan() || lambda.im <= 0.0 {
                return Err(SolveError::new(Outcome::EllipticityLoss, lambda, jm, x));
            }
            return Ok(converged(lambda, a, iteration));
        }
        if iteration == cfg.max_newton_iters || !(step.re.is_finite() && step.im.is_finite()) {
            break;
        }
        // Damp the update until the characteristic coordinate stays in the seed domain.
        let mut t = 1.0;
        loop {
            let candidate = lambda - step * t;
            if seed.contains(characteristic_coordinate(candidate, x, y)) {
                lambda = candidate;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(outside(lambda, x));
            }
        }
    }
    Err(SolveError::new(Outcome::NonConvergence, best.1, best.2, x))
}

/// A shock point reached exactly is a double root of `F`, which Newton can only
/// pin down to about `sqrt(machine eps)`. There `J` has a simple root in
/// `lambda`, so solve `J(lambda) = 0` by secant iteration instead and keep the
/// result if it is also a root of `F`.
fn polish_shock<S: SeedFunction + ?Sized>(seed: &S, x: f64, y: f64, guess: Complex64) -> Option<Complex64> {
    let jac = |l: Complex64| jacobian_of(seed, l, x, y).ok();
    let mut l0 = guess;
    let mut l1 = guess + 1e-6 * (1.0 + guess.norm());
    let mut j0 = jac(l0)?;
    let mut j1 = jac(l1)?;
    for _ in 0..60 {
        let den = j1 - j0;
        if den.norm() == 0.0 {
            break;
        }
        let l2 = l1 - j1 * (l1 - l0) / den;
        if !(l2.re.is_finite() && l2.im.is_finite()) {
            return None;
        }
        l0 = l1;
        j0 = j1;
        l1 = l2;
        j1 = jac(l1)?;
        if (l1 - l0).norm() <= 1e-15 * (1.0 + l1.norm()) {
            break;
        }
    }
    let value = seed.eval_at(characteristic_coordinate(l1, x, y)).ok()?.value;
    let scale = 1.0 + l1.norm();
    let close = (l1 - guess).norm() <= 1e-3 * scale;
    (close && (l1 - value).norm() <= 1e-10 * scale && j1.norm() <= 1e-6).then_some(l1)
}

#[derive(Debug, Clone, Copy)]
struct Station {
    x: f64,
    lambda: Complex64,
    /// Real-linear derivative pieces at the station.
    a: Complex64,
    b: Complex64,
    f_w: Complex64,
    f_wbar: Complex64,
    iterations: usize,
}

impl Station {
    fn at<S: SeedFunction + ?Sized>(seed: &S, x: f64, y: f64, sol: &Solution) -> Result<Self, SolveError> {
        let e = seed
            .eval_at(characteristic_coordinate(sol.lambda, x, y))
            .map_err(|_| outside(sol.lambda, x))?;
        Ok(Self {
            x,
            lambda: sol.lambda,
            a: 1.0 + e.d_dw * x,
            b: e.d_dwbar * x,
            f_w: e.d_dw,
            f_wbar: e.d_dwbar,
            iterations: sol.iterations,
        })
    }

    /// `d lambda / dx` along fixed `y`.
    fn slope(&self) -> Complex64 {
        let r = -(self.f_w * self.lambda + self.f_wbar * self.lambda.conj());
        let det = self.a.norm_sqr() - self.b.norm_sqr();
        (self.a.conj() * r - self.b * r.conj()) / det
    }

    fn into_solution(self) -> Solution {
        let mut sol = converged(self.lambda, self.a, self.iterations);
        let det = self.a.norm_sqr() - self.b.norm_sqr();
        sol.status.jacobian_modulus = det.abs().sqrt();
        sol
    }
}

fn smooth_transition(from: &Station, to: &Station) -> bool {
    let ratio = to.a / from.a;
    let m = ratio.norm();
    m.is_finite() && (1.0 / MAX_JACOBIAN_RATIO..=MAX_JACOBIAN_RATIO).contains(&m) && ratio.arg().abs() < MAX_JACOBIAN_TURN
}

/// March from the initial slice to `x` in `continuation_steps` equal steps,
/// each Newton solve seeded by a first-order predictor.
///
/// A step is refined by halving only when it fails or when `J` jumps in
/// modulus or phase; a step that keeps failing down to the minimum width
/// stops the march and is classified (shock, ellipticity loss, or the
/// solver's own failure) at the point reached.
pub fn solve_continuation(spec: &SeedSpec, x: f64, y: f64, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    check_strip(spec, x)?;
    continuation(spec, x, y, cfg)
}

/// [`solve_continuation`] for any [`SeedFunction`].
pub fn continuation<S: SeedFunction + ?Sized>(seed: &S, x: f64, y: f64, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    let start = initial_slice(seed, y)?;
    if x == 0.0 {
        return Ok(start);
    }
    let mut station = Station::at(seed, 0.0, y, &start)?;
    let n = cfg.continuation_steps;
    for k in 1..=n {
        let target = if k == n { x } else { x * (k as f64 / n as f64) };
        station = advance(seed, y, station, target, cfg, 0)?;
    }
    Ok(station.into_solution())
}

fn advance<S: SeedFunction + ?Sized>(
    seed: &S,
    y: f64,
    from: Station,
    to_x: f64,
    cfg: &SolverConfig,
    depth: usize,
) -> Result<Station, SolveError> {
    let h = to_x - from.x;
    let predicted = from.lambda + from.slope() * h;
    let guess = if predicted.im > 0.0 && predicted.re.is_finite() && predicted.im.is_finite() {
        predicted
    } else {
        from.lambda
    };
    let attempt = newton(seed, to_x, y, guess, cfg);
    let failure = match attempt {
        Ok(sol) => {
            let station = Station::at(seed, to_x, y, &sol)?;
            if smooth_transition(&from, &station) {
                return Ok(station);
            }
            None
        }
        Err(e) if e.outcome == Outcome::Shock => return Err(e),
        Err(e) => {
            if e.jacobian_modulus < SHOCK_PROXIMITY {
                if let Some(lambda) = polish_shock(seed, to_x, y, e.lambda) {
                    return Err(SolveError::new(Outcome::Shock, lambda, 0.0, to_x));
                }
            }
            Some(e)
        }
    };
    if depth >= MAX_REFINE_DEPTH || h.abs() <= MIN_STEP * (1.0 + to_x.abs()) {
        return Err(classify(seed, y, &from, to_x, failure));
    }
    let mid = from.x + 0.5 * h;
    let halfway = advance(seed, y, from, mid, cfg, depth + 1)?;
    advance(seed, y, halfway, to_x, cfg, depth + 1)
}

/// Decide what stopped the march between `last` and `x_fail`.
fn classify<S: SeedFunction + ?Sized>(
    seed: &S,
    y: f64,
    last: &Station,
    x_fail: f64,
    failure: Option<SolveError>,
) -> SolveError {
    if let Some(lambda) = polish_shock(seed, x_fail, y, last.lambda) {
        return SolveError::new(Outcome::Shock, lambda, 0.0, x_fail);
    }
    let jm = (last.a.norm_sqr() - last.b.norm_sqr()).abs().sqrt();
    if jm < SHOCK_PROXIMITY {
        return SolveError::new(Outcome::Shock, last.lambda, jm, last.x);
    }
    if last.lambda.im < ELLIPTICITY_PROXIMITY * (1.0 + last.lambda.norm()) {
        return SolveError::new(Outcome::EllipticityLoss, last.lambda, jm, last.x);
    }
    match failure {
        Some(mut e) => {
            e.x_reached = last.x;
            e
        }
        // Converged on both sides of an arbitrarily small step, yet J jumped:
        // the path runs through a zero of J.
        None => SolveError::new(Outcome::Shock, last.lambda, jm, last.x),
    }
}

/// The library's default route: closed form where one exists, continuation otherwise.
pub fn solve(spec: &SeedSpec, x: f64, y: f64, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    if spec.is_holomorphic() {
        solve_closed_form(spec, x, y, cfg)
    } else {
        solve_continuation(spec, x, y, cfg)
    }
}
