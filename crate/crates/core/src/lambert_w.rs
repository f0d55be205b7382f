//! Principal branch `W0` of the Lambert W function on the whole complex plane.
//!
//! Halley iteration on `w e^w - z`, started from `log(1 + z)` in the bulk, the
//! asymptotic `log z - log log z` far out, and the branch-point expansion in
//! `p = sqrt(2(e z + 1))` within 0.6 of `-1/e` (where `log(1 + z)` can land
//! Halley on a neighbouring branch).

use std::f64::consts::E;

use num_complex::Complex64;
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 50;

/// Below this `|z + 1/e|` the branch-point series is used directly.
const BRANCH_POINT_RADIUS: f64 = 1e-6;

/// `lambert_w0_over_x` switches to the series when `|x e^y|` drops below this.
pub const SMALL_ARGUMENT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertResult {
    pub w: Complex64,
    pub iterations: usize,
    /// `|w e^w - z|`
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("Lambert W0 did not converge for z = {z} after {iterations} iterations (best residual {residual:e})")]
pub struct NonConvergence {
    pub z: Complex64,
    pub iterations: usize,
    pub residual: f64,
    pub best: Complex64,
}

fn residual(w: Complex64, z: Complex64) -> f64 {
    (w * w.exp() - z).norm()
}

/// Series about the branch point, `W0 = -1 + p - p^2/3 + 11/72 p^3 - ...`.
fn branch_point_series(z: Complex64) -> Complex64 {
    let p = (2.0 * (E * z + 1.0)).sqrt();
    const COEFFS: [f64; 6] = [-1.0, 1.0, -1.0 / 3.0, 11.0 / 72.0, -43.0 / 540.0, 769.0 / 17280.0];
    COEFFS.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * p + c)
}

fn initial_guess(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 3.0 {
        let l = z.ln();
        l - l.ln()
    } else if (z + 1.0 / E).norm() < 0.6 {
        branch_point_series(z)
    } else {
        (1.0 + z).ln()
    }
}

pub fn lambert_w0(z: Complex64) -> Result<LambertResult, NonConvergence> {
    if z.re == 0.0 && z.im == 0.0 {
        return Ok(LambertResult { w: z, iterations: 0, residual: 0.0 });
    }
    if (z + 1.0 / E).norm() < BRANCH_POINT_RADIUS {
        let w = branch_point_series(z);
        return Ok(LambertResult { w, iterations: 0, residual: residual(w, z) });
    }

    let real_axis = z.im == 0.0 && z.re > -1.0 / E;
    let mut w = initial_guess(z);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        if !(step.re.is_finite() && step.im.is_finite()) {
            break;
        }
        w -= step;
        if step.norm() < 1e-15 * (1.0 + w.norm()) {
            if real_axis {
                w.im = 0.0;
            }
            return Ok(LambertResult { w, iterations, residual: residual(w, z) });
        }
    }
    let res = residual(w, z);
    if res <= 1e-12 * z.norm().max(1.0) {
        return Ok(LambertResult { w, iterations, residual: res });
    }
    Err(NonConvergence { z, iterations, residual: res, best: w })
}

/// `W0(i x e^y) / x`, the exponential seed's spectral parameter.
///
/// The ratio tends to `i e^y` as `x -> 0`; small arguments use
/// `W0(z)/x = i e^y (1 - z + 3/2 z^2)` to avoid dividing two tiny numbers.
pub fn lambert_w0_over_x(x: f64, y: f64) -> Complex64 {
    let ey = y.exp();
    let z = Complex64::new(0.0, x * ey);
    if (x * ey).abs() < SMALL_ARGUMENT {
        return Complex64::new(0.0, ey) * (1.0 - z + 1.5 * z * z);
    }
    let w = match lambert_w0(z) {
        Ok(r) => r.w,
        Err(e) => e.best,
    };
    w / x
}
