//! Residuals of the identities satisfied by the transform, checked numerically.
//!
//! Partial derivatives of solver output are central differences in `x` and
//! `y`. Wirtinger derivatives use `z = x + i y`:
//! `d/dz̄ = (d/dx + i d/dy) / 2` and `d/dz = (d/dx - i d/dy) / 2`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::cayley;
use crate::seeds::{PerturbationSpec, SeedError, SeedEval, SeedFunction, SeedSpec};
use crate::solver::{characteristic_coordinate, continuation, newton, solve, SolveError, SolverConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FDScheme {
    Central2,
    Central4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FDConfig {
    pub step: f64,
    pub scheme: FDScheme,
}

impl Default for FDConfig {
    fn default() -> Self {
        FDConfig { step: 1e-5, scheme: FDScheme::Central2 }
    }
}

impl FDConfig {
    pub fn central4(step: f64) -> Self {
        FDConfig { step, scheme: FDScheme::Central4 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("{side} side of the equivariance identity failed: {source}")]
    Equivariance { side: &'static str, source: SolveError },
    #[error("finite-difference step must be > 0, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub name: String,
    pub point: (f64, f64),
    pub value: Complex64,
    pub magnitude: f64,
    pub fd_step: f64,
    pub detail: BTreeMap<String, Complex64>,
}

impl ResidualReport {
    fn new(name: &str, point: (f64, f64), value: Complex64, fd_step: f64) -> Self {
        ResidualReport { name: name.to_string(), point, value, magnitude: value.norm(), fd_step, detail: BTreeMap::new() }
    }

    fn with(mut self, key: &str, v: Complex64) -> Self {
        self.detail.insert(key.to_string(), v);
        self
    }
}

fn lambda_at(spec: &SeedSpec, x: f64, y: f64, cfg: &SolverConfig) -> Result<Complex64, SolveError> {
    solve(spec, x, y, cfg).map(|s| s.lambda)
}

fn derivative(g: &impl Fn(f64) -> Result<Complex64, SolveError>, t: f64, fd: &FDConfig) -> Result<Complex64, AnalysisError> {
    let h = fd.step;
    if !(h > 0.0 && h.is_finite()) {
        return Err(AnalysisError::BadStep(h));
    }
    Ok(match fd.scheme {
        FDScheme::Central2 => (g(t + h)? - g(t - h)?) / (2.0 * h),
        FDScheme::Central4 => (g(t - 2.0 * h)? - 8.0 * g(t - h)? + 8.0 * g(t + h)? - g(t + 2.0 * h)?) / (12.0 * h),
    })
}

/// `(d/dx, d/dy)` of a field at `(x, y)`.
fn gradient(
    g: impl Fn(f64, f64) -> Result<Complex64, SolveError>,
    x: f64,
    y: f64,
    fd: &FDConfig,
) -> Result<(Complex64, Complex64), AnalysisError> {
    let gx = derivative(&|t| g(t, y), x, fd)?;
    let gy = derivative(&|t| g(x, t), y, fd)?;
    Ok((gx, gy))
}

/// `H = lambda_x + lambda lambda_y`, zero for every holomorphic seed.
pub fn rigidity_residual(
    spec: &SeedSpec,
    x: f64,
    y: f64,
    fd: &FDConfig,
    cfg: &SolverConfig,
) -> Result<ResidualReport, AnalysisError> {
    let lambda = lambda_at(spec, x, y, cfg)?;
    let (lx, ly) = gradient(|x, y| lambda_at(spec, x, y, cfg), x, y, fd)?;
    let h = lx + lambda * ly;
    Ok(ResidualReport::new("rigidity", (x, y), h, fd.step)
        .with("lambda", lambda)
        .with("lambda_x", lx)
        .with("lambda_y", ly)
        .with("H", h))
}

/// `H` on the initial slice from the seed alone: `2 i Im f(y) f_w̄(y)`.
pub fn obstruction_initial(spec: &SeedSpec, y: f64) -> Result<Complex64, SeedError> {
    let e = spec.eval(Complex64::new(y, 0.0))?;
    Ok(2.0 * I * e.value.im * e.d_dwbar)
}

struct Dilatation {
    mu: Complex64,
    mu_z: Complex64,
    mu_zbar: Complex64,
}

fn dilatation(spec: &SeedSpec, x: f64, y: f64, fd: &FDConfig, cfg: &SolverConfig) -> Result<Dilatation, AnalysisError> {
    let mu_at = |x: f64, y: f64| -> Result<Complex64, SolveError> {
        let lambda = lambda_at(spec, x, y, cfg)?;
        Ok(cayley(lambda).expect("converged lambda lies in the upper half-plane"))
    };
    let mu = mu_at(x, y)?;
    let (mx, my) = gradient(mu_at, x, y, fd)?;
    Ok(Dilatation { mu, mu_z: 0.5 * (mx - I * my), mu_zbar: 0.5 * (mx + I * my) })
}

/// `mu_z̄ - mu mu_z` for `mu = C(lambda)`.
pub fn self_dilatation_residual(
    spec: &SeedSpec,
    x: f64,
    y: f64,
    fd: &FDConfig,
    cfg: &SolverConfig,
) -> Result<ResidualReport, AnalysisError> {
    let d = dilatation(spec, x, y, fd, cfg)?;
    let r = d.mu_zbar - d.mu * d.mu_z;
    Ok(ResidualReport::new("self_dilatation", (x, y), r, fd.step)
        .with("mu", d.mu)
        .with("mu_z", d.mu_z)
        .with("mu_zbar", d.mu_zbar)
        .with("R", r))
}

/// Closed-form `R(mu)` on the initial slice, `-4 i Im f f_w̄ / (f + i)^3`.
///
/// `detail["R_fd"]` holds the finite-difference `mu_z̄ - mu mu_z` at `(0, y)`.
pub fn poincare_residual_initial(
    spec: &SeedSpec,
    y: f64,
    fd: &FDConfig,
    cfg: &SolverConfig,
) -> Result<ResidualReport, AnalysisError> {
    let e = spec.eval(Complex64::new(y, 0.0))?;
    let closed = -4.0 * I * e.value.im * e.d_dwbar / (e.value + I).powu(3);
    let d = dilatation(spec, 0.0, y, fd, cfg)?;
    let r_fd = d.mu_zbar - d.mu * d.mu_z;
    Ok(ResidualReport::new("poincare_initial", (0.0, y), closed, fd.step)
        .with("lambda", e.value)
        .with("mu", d.mu)
        .with("R", closed)
        .with("R_fd", r_fd))
}

/// `P_f[h] = h(w0) / J`.
pub fn propagator(
    spec: &SeedSpec,
    h: &PerturbationSpec,
    x: f64,
    y: f64,
    cfg: &SolverConfig,
) -> Result<Complex64, AnalysisError> {
    let (p, _) = propagator_parts(spec, h, x, y, cfg)?;
    Ok(p)
}

fn propagator_parts(
    spec: &SeedSpec,
    h: &PerturbationSpec,
    x: f64,
    y: f64,
    cfg: &SolverConfig,
) -> Result<(Complex64, Complex64), AnalysisError> {
    let sol = solve(spec, x, y, cfg)?;
    let w0 = characteristic_coordinate(sol.lambda, x, y);
    Ok((h.eval(w0)? / sol.jacobian, sol.jacobian))
}

/// `f + eps h`.
struct Perturbed<'a> {
    base: &'a SeedSpec,
    h: &'a PerturbationSpec,
    eps: f64,
}

impl SeedFunction for Perturbed<'_> {
    fn eval_at(&self, w: Complex64) -> Result<SeedEval, SeedError> {
        let e = self.base.eval(w)?;
        let (hv, hd) = self.h.eval_with_derivative(w)?;
        Ok(SeedEval { value: e.value + self.eps * hv, d_dw: e.d_dw + self.eps * hd, d_dwbar: e.d_dwbar })
    }
    fn contains(&self, w: Complex64) -> bool {
        self.base.domain_contains(w)
    }
    fn label(&self) -> &'static str {
        "perturbed"
    }
}

/// Propagator against `(B[f + eps h] - B[f - eps h]) / (2 eps)`.
pub fn propagator_fd_check(
    spec: &SeedSpec,
    h: &PerturbationSpec,
    x: f64,
    y: f64,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<ResidualReport, AnalysisError> {
    let base = solve(spec, x, y, cfg)?;
    let p = h.eval(characteristic_coordinate(base.lambda, x, y))? / base.jacobian;
    let side = |sign: f64| newton(&Perturbed { base: spec, h, eps: sign * eps }, x, y, base.lambda, cfg).map(|s| s.lambda);
    let plus = side(1.0)?;
    let minus = side(-1.0)?;
    let fd = (plus - minus) / (2.0 * eps);
    Ok(ResidualReport::new("propagator_fd", (x, y), p - fd, eps)
        .with("lambda", base.lambda)
        .with("J", base.jacobian)
        .with("P", p)
        .with("P_fd", fd))
}

/// `P[h1 h2] - J P[h1] P[h2]`.
pub fn twisted_multiplicativity_residual(
    spec: &SeedSpec,
    h1: &PerturbationSpec,
    h2: &PerturbationSpec,
    x: f64,
    y: f64,
    cfg: &SolverConfig,
) -> Result<ResidualReport, AnalysisError> {
    let product = PerturbationSpec::product(h1.clone(), h2.clone());
    let (p12, jac) = propagator_parts(spec, &product, x, y, cfg)?;
    let (p1, _) = propagator_parts(spec, h1, x, y, cfg)?;
    let (p2, _) = propagator_parts(spec, h2, x, y, cfg)?;
    let r = p12 - deformed_product(jac, p1, p2);
    Ok(ResidualReport::new("twisted_multiplicativity", (x, y), r, 0.0)
        .with("J", jac)
        .with("P1", p1)
        .with("P2", p2)
        .with("P12", p12))
}

/// `v1 ⋆ v2 = J v1 v2`.
pub fn deformed_product(jac: Complex64, v1: Complex64, v2: Complex64) -> Complex64 {
    jac * v1 * v2
}

/// `a f + b` for seeds whose composition has no catalog entry.
struct Composed<'a> {
    base: &'a SeedSpec,
    a: f64,
    b: f64,
}

impl SeedFunction for Composed<'_> {
    fn eval_at(&self, w: Complex64) -> Result<SeedEval, SeedError> {
        let e = self.base.eval(w)?;
        Ok(SeedEval { value: self.a * e.value + self.b, d_dw: self.a * e.d_dw, d_dwbar: self.a * e.d_dwbar })
    }
    fn contains(&self, w: Complex64) -> bool {
        self.base.domain_contains(w)
    }
    fn label(&self) -> &'static str {
        "composed"
    }
}

/// `B[a f + b](x, y) - (a B[f](a x, y - b x) + b)`.
pub fn affine_equivariance_residual(
    spec: &SeedSpec,
    a: f64,
    b: f64,
    x: f64,
    y: f64,
    cfg: &SolverConfig,
) -> Result<ResidualReport, AnalysisError> {
    let left = match spec.apply_affine(a, b) {
        Ok(composed) => solve(&composed, x, y, cfg),
        Err(SeedError::UnsupportedComposition(_)) => continuation(&Composed { base: spec, a, b }, x, y, cfg),
        Err(e) => return Err(e.into()),
    }
    .map_err(|source| AnalysisError::Equivariance { side: "left", source })?
    .lambda;
    let inner = lambda_at(spec, a * x, y - b * x, cfg).map_err(|source| AnalysisError::Equivariance { side: "right", source })?;
    let right = a * inner + b;
    Ok(ResidualReport::new("affine_equivariance", (x, y), left - right, 0.0)
        .with("left", left)
        .with("right", right))
}

/// `max |B[f](0, y) - f(y)|` over the samples.
pub fn seed_recovery_residual(spec: &SeedSpec, ys: &[f64], cfg: &SolverConfig) -> Result<f64, AnalysisError> {
    ys.iter().try_fold(0.0f64, |worst, &y| {
        let lambda = lambda_at(spec, 0.0, y, cfg)?;
        let f = spec.eval(Complex64::new(y, 0.0))?.value;
        Ok(worst.max((lambda - f).norm()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn rigidity_examples() {
        let fd = FDConfig::default();
        let eps = SeedSpec::epsilon(0.5).unwrap();
        assert!(rigidity_residual(&eps, 0.3, 1.0, &fd, &cfg()).unwrap().magnitude < 1e-6);
        let delta = SeedSpec::affine_delta(1.0).unwrap();
        assert!(rigidity_residual(&delta, 0.7, -0.4, &fd, &cfg()).unwrap().magnitude < 1e-8);
        let nh = SeedSpec::nonholo_test(1.0, 0.2).unwrap();
        let r = rigidity_residual(&nh, 0.0, 0.5, &fd, &cfg()).unwrap();
        assert!((r.value - c(0.0, 0.4)).norm() < 1e-5, "{:?}", r.value);
    }

    #[test]
    fn obstruction_examples() {
        assert_eq!(obstruction_initial(&SeedSpec::affine_delta(1.0).unwrap(), 3.0).unwrap(), c(0.0, 0.0));
        let nh = SeedSpec::nonholo_test(1.0, 0.2).unwrap();
        assert!((obstruction_initial(&nh, 0.5).unwrap() - c(0.0, 0.4)).norm() < 1e-15);
        let flat = SeedSpec::nonholo_test(2.0, 0.0).unwrap();
        assert_eq!(obstruction_initial(&flat, 1.7).unwrap().norm(), 0.0);
    }

    #[test]
    fn dilatation_examples() {
        let fd = FDConfig::default();
        let eps = SeedSpec::epsilon(0.5).unwrap();
        let r = self_dilatation_residual(&eps, 0.3, 1.0, &fd, &cfg()).unwrap();
        assert!((r.detail["mu"] - c(0.04138, 0.13794)).norm() < 1e-5);
        assert!(r.magnitude < 1e-6);
        let constant = SeedSpec::constant(1.0).unwrap();
        assert_eq!(self_dilatation_residual(&constant, 0.4, -2.0, &fd, &cfg()).unwrap().magnitude, 0.0);
        let delta = SeedSpec::affine_delta(1.0).unwrap();
        let r = self_dilatation_residual(&delta, 0.5, 0.5, &fd, &cfg()).unwrap();
        assert!(r.magnitude < 1e-7);
        // mu_z = -1 / (z̄ + delta + 1) with z = x + i y
        let exact = -1.0 / (c(0.5, -0.5) + 2.0);
        assert!((r.detail["mu_z"] - exact).norm() < 1e-8);
    }

    #[test]
    fn poincare_examples() {
        let fd = FDConfig::default();
        let exp = SeedSpec::exponential();
        assert_eq!(poincare_residual_initial(&exp, 0.3, &fd, &cfg()).unwrap().magnitude, 0.0);
        let nh = SeedSpec::nonholo_test(1.0, 0.2).unwrap();
        let r = poincare_residual_initial(&nh, 0.0, &fd, &cfg()).unwrap();
        assert!((r.value - c(0.1, 0.0)).norm() < 1e-15);
        assert!((r.detail["R_fd"] - r.value).norm() < 1e-4, "{:?}", r.detail["R_fd"]);
        let nh0 = SeedSpec::nonholo_test(1.0, 0.0).unwrap();
        assert_eq!(poincare_residual_initial(&nh0, 1.0, &fd, &cfg()).unwrap().magnitude, 0.0);
    }

    #[test]
    fn propagator_examples() {
        let eps = SeedSpec::epsilon(0.5).unwrap();
        let p = propagator(&eps, &PerturbationSpec::IdentityFn, 0.3, 1.0, &cfg()).unwrap();
        assert!((p - c(1.19204, -0.31379)).norm() < 1e-5);
        let delta = SeedSpec::affine_delta(1.0).unwrap();
        let k = c(2.0, -1.0);
        let p = propagator(&delta, &PerturbationSpec::ConstantFn(k), 0.6, 1.1, &cfg()).unwrap();
        assert!((p - k / 1.6).norm() < 1e-15);
        let h = PerturbationSpec::MonomialFn { coeff: c(1.0, 1.0), degree: 3 };
        let p = propagator(&SeedSpec::exponential(), &h, 0.0, 0.7, &cfg()).unwrap();
        assert_eq!(p, h.eval(c(0.7, 0.0)).unwrap());
    }

    #[test]
    fn propagator_against_finite_differences() {
        let eps = SeedSpec::epsilon(0.5).unwrap();
        let r = propagator_fd_check(&eps, &PerturbationSpec::IdentityFn, 0.3, 1.0, 1e-6, &cfg()).unwrap();
        assert!(r.magnitude < 1e-5);
        let delta = SeedSpec::affine_delta(1.0).unwrap();
        let one = PerturbationSpec::ConstantFn(c(1.0, 0.0));
        let r = propagator_fd_check(&delta, &one, 1.0, 0.0, 1e-6, &cfg()).unwrap();
        assert!(r.magnitude < 1e-8);
        let zero = PerturbationSpec::ConstantFn(c(0.0, 0.0));
        assert_eq!(propagator_fd_check(&eps, &zero, 0.3, 1.0, 1e-6, &cfg()).unwrap().magnitude, 0.0);
    }

    #[test]
    fn twisted_multiplicativity_examples() {
        let id = PerturbationSpec::IdentityFn;
        let delta = SeedSpec::affine_delta(1.0).unwrap();
        assert!(twisted_multiplicativity_residual(&delta, &id, &id, 1.0, 2.0, &cfg()).unwrap().magnitude < 1e-13);
        let eps = SeedSpec::epsilon(0.5).unwrap();
        let two = PerturbationSpec::ConstantFn(c(2.0, 0.0));
        let sq = PerturbationSpec::MonomialFn { coeff: c(1.0, 0.0), degree: 2 };
        assert!(twisted_multiplicativity_residual(&eps, &two, &sq, 0.3, 1.0, &cfg()).unwrap().magnitude < 1e-12);
        let r = twisted_multiplicativity_residual(&eps, &two, &sq, 0.0, 1.0, &cfg()).unwrap();
        assert_eq!(r.detail["J"], c(1.0, 0.0));
        assert_eq!(r.magnitude, 0.0);
    }

    #[test]
    fn deformed_product_examples() {
        let (v1, v2) = (c(0.3, 2.0), c(-1.0, 0.5));
        assert_eq!(deformed_product(c(1.0, 0.0), v1, v2), v1 * v2);
        assert_eq!(deformed_product(c(0.0, 0.0), v1, v2), c(0.0, 0.0));
        assert_eq!(deformed_product(c(1.5, 0.0), c(1.0, 0.0), c(1.0, 0.0)), c(1.5, 0.0));
    }

    #[test]
    fn equivariance_examples() {
        let delta = SeedSpec::affine_delta(1.0).unwrap();
        let r = affine_equivariance_residual(&delta, 2.0, 0.0, 0.25, 1.0, &cfg()).unwrap();
        assert!(r.magnitude < 1e-11);
        assert!((r.detail["left"] - 2.0 * c(1.0, 1.0) / 1.5).norm() < 1e-14);
        assert!(affine_equivariance_residual(&delta, 1.0, 3.0, 0.5, 0.0, &cfg()).unwrap().magnitude < 1e-11);
        let r = affine_equivariance_residual(&SeedSpec::exponential(), 1.0, 0.0, 0.8, 0.2, &cfg()).unwrap();
        assert!(r.magnitude < 1e-10, "{}", r.magnitude);
        let r = affine_equivariance_residual(&SeedSpec::epsilon(0.5).unwrap(), 1.5, -0.5, 0.2, 0.3, &cfg()).unwrap();
        assert!(r.magnitude < 1e-10, "{}", r.magnitude);
    }

    #[test]
    fn seed_recovery_examples() {
        let ys: Vec<f64> = (-2..=2).map(f64::from).collect();
        assert!(seed_recovery_residual(&SeedSpec::exponential(), &ys, &cfg()).unwrap() < 1e-13);
        let ys: Vec<f64> = (0..=78).map(|k| -3.9 + 0.1 * k as f64).collect();
        assert!(seed_recovery_residual(&SeedSpec::epsilon(0.5).unwrap(), &ys, &cfg()).unwrap() < 1e-13);
        let ys: Vec<f64> = (-5..=5).map(f64::from).collect();
        assert!(seed_recovery_residual(&SeedSpec::cauchy_kernel(1.0).unwrap(), &ys, &cfg()).unwrap() < 1e-13);
    }
}
