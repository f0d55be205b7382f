//! Seed catalog.
//!
//! A seed is a function `f: U -> C+` whose restriction to the real line is the
//! initial data `lambda(0, y) = f(y)`. Every family except [`SeedKind::NonHoloTest`]
//! is holomorphic; that one carries a constant `d/dw̄` term so the obstruction
//! formulas have something to measure.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeedError {
    #[error("invalid seed parameter: {0}")]
    InvalidParameter(String),
    #[error("argument {w} lies outside the domain of the {family} seed")]
    OutsideSeedDomain { family: &'static str, w: Complex64 },
    #[error("composition a*f+b leaves the closed-form catalog for the {0} seed")]
    UnsupportedComposition(&'static str),
    #[error("cannot parse seed `{0}`")]
    Parse(String),
}

/// Family tags, as they appear in the `family` field of the JSON descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedFamily {
    Constant,
    AffineDelta,
    Epsilon,
    Exponential,
    CauchyKernel,
    GenericAffine,
    NonHoloTest,
}

impl SeedFamily {
    pub fn name(self) -> &'static str {
        match self {
            SeedFamily::Constant => "constant",
            SeedFamily::AffineDelta => "affine_delta",
            SeedFamily::Epsilon => "epsilon",
            SeedFamily::Exponential => "exponential",
            SeedFamily::CauchyKernel => "cauchy_kernel",
            SeedFamily::GenericAffine => "generic_affine",
            SeedFamily::NonHoloTest => "nonholo_test",
        }
    }
}

impl fmt::Display for SeedFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Validated seed parameters. Obtain one through the [`SeedSpec`] constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedKind {
    /// `f = i c`, `c > 0`.
    Constant { c: f64 },
    /// `f(w) = w + i delta`.
    AffineDelta { delta: f64 },
    /// `f(w) = (-eps w + i sqrt(4 - eps^2 w^2)) / 2`.
    Epsilon { eps: f64 },
    /// `f(w) = i e^w`.
    Exponential,
    /// `f(w) = -1 / (w + i delta)`.
    CauchyKernel { delta: f64 },
    /// `f(w) = slope w + intercept + i imag`.
    GenericAffine { slope: f64, intercept: f64, imag: f64 },
    /// `f(w, w̄) = w + i delta + c w̄`.
    NonHoloTest { delta: f64, c: f64 },
}

/// The value of a seed and its two Wirtinger derivatives at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedEval {
    pub value: Complex64,
    pub d_dw: Complex64,
    pub d_dwbar: Complex64,
}

/// Symbolic descriptor of a seed. Parameters are validated at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeed", into = "RawSeed")]
pub struct SeedSpec {
    kind: SeedKind,
}

fn positive(name: &str, v: f64) -> Result<f64, SeedError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SeedError::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<f64, SeedError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SeedError::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

impl SeedSpec {
    pub fn constant(c: f64) -> Result<Self, SeedError> {
        Ok(Self { kind: SeedKind::Constant { c: positive("c", c)? } })
    }

    pub fn affine_delta(delta: f64) -> Result<Self, SeedError> {
        Ok(Self { kind: SeedKind::AffineDelta { delta: positive("delta", delta)? } })
    }

    pub fn epsilon(eps: f64) -> Result<Self, SeedError> {
        let eps = finite("eps", eps)?;
        if eps == 0.0 {
            return Err(SeedError::InvalidParameter("eps must be nonzero".into()));
        }
        Ok(Self { kind: SeedKind::Epsilon { eps } })
    }

    pub fn exponential() -> Self {
        Self { kind: SeedKind::Exponential }
    }

    pub fn cauchy_kernel(delta: f64) -> Result<Self, SeedError> {
        Ok(Self { kind: SeedKind::CauchyKernel { delta: positive("delta", delta)? } })
    }

    pub fn generic_affine(slope: f64, intercept: f64, imag: f64) -> Result<Self, SeedError> {
        Ok(Self {
            kind: SeedKind::GenericAffine {
                slope: finite("slope", slope)?,
                intercept: finite("intercept", intercept)?,
                imag: positive("imag", imag)?,
            },
        })
    }

    pub fn nonholo_test(delta: f64, c: f64) -> Result<Self, SeedError> {
        Ok(Self { kind: SeedKind::NonHoloTest { delta: positive("delta", delta)?, c: finite("c", c)? } })
    }

    pub fn kind(&self) -> SeedKind {
        self.kind
    }

    pub fn family(&self) -> SeedFamily {
        match self.kind {
            SeedKind::Constant { .. } => SeedFamily::Constant,
            SeedKind::AffineDelta { .. } => SeedFamily::AffineDelta,
            SeedKind::Epsilon { .. } => SeedFamily::Epsilon,
            SeedKind::Exponential => SeedFamily::Exponential,
            SeedKind::CauchyKernel { .. } => SeedFamily::CauchyKernel,
            SeedKind::GenericAffine { .. } => SeedFamily::GenericAffine,
            SeedKind::NonHoloTest { .. } => SeedFamily::NonHoloTest,
        }
    }

    /// True for every family with `d/dw̄ f = 0`.
    ///
    /// `NonHoloTest` with `c = 0` is holomorphic as a function but is still
    /// reported as non-holomorphic here; its solves take the real-Jacobian path.
    pub fn is_holomorphic(&self) -> bool {
        !matches!(self.kind, SeedKind::NonHoloTest { .. })
    }

    /// Seeds that map the real line into `iR+`.
    pub fn is_imaginary_on_real_axis(&self) -> bool {
        matches!(self.kind, SeedKind::Constant { .. } | SeedKind::Exponential)
    }

    /// Holomorphy domain membership.
    pub fn domain_contains(&self, w: Complex64) -> bool {
        if !(w.re.is_finite() && w.im.is_finite()) {
            return false;
        }
        match self.kind {
            SeedKind::Epsilon { eps } => !(w.im == 0.0 && w.re.abs() >= 2.0 / eps.abs()),
            SeedKind::Exponential => w.im.abs() < FRAC_PI_2,
            SeedKind::CauchyKernel { delta } => !(w.re == 0.0 && w.im == -delta),
            SeedKind::Constant { .. }
            | SeedKind::AffineDelta { .. }
            | SeedKind::GenericAffine { .. }
            | SeedKind::NonHoloTest { .. } => true,
        }
    }

    pub fn eval(&self, w: Complex64) -> Result<SeedEval, SeedError> {
        if !self.domain_contains(w) {
            return Err(SeedError::OutsideSeedDomain { family: self.family().name(), w });
        }
        let zero = Complex64::new(0.0, 0.0);
        let holo = |value, d_dw| SeedEval { value, d_dw, d_dwbar: zero };
        Ok(match self.kind {
            SeedKind::Constant { c } => holo(Complex64::new(0.0, c), zero),
            SeedKind::AffineDelta { delta } => holo(w + I * delta, Complex64::new(1.0, 0.0)),
            SeedKind::GenericAffine { slope, intercept, imag } => {
                holo(w * slope + Complex64::new(intercept, imag), Complex64::new(slope, 0.0))
            }
            SeedKind::Epsilon { eps } => {
                let root = epsilon_root(eps, w);
                let value = (I * root - w * eps) * 0.5;
                holo(value, I * eps * value / root)
            }
            SeedKind::Exponential => {
                let value = I * w.exp();
                holo(value, value)
            }
            SeedKind::CauchyKernel { delta } => {
                let s = w + I * delta;
                holo(-s.inv(), (s * s).inv())
            }
            SeedKind::NonHoloTest { delta, c } => SeedEval {
                value: w + I * delta + w.conj() * c,
                d_dw: Complex64::new(1.0, 0.0),
                d_dwbar: Complex64::new(c, 0.0),
            },
        })
    }

    /// The seed of `a f + b`, when that stays inside the closed-form catalog.
    pub fn apply_affine(&self, a: f64, b: f64) -> Result<SeedSpec, SeedError> {
        positive("a", a)?;
        finite("b", b)?;
        match self.kind {
            SeedKind::AffineDelta { delta } => SeedSpec::generic_affine(a, b, a * delta),
            SeedKind::GenericAffine { slope, intercept, imag } => {
                SeedSpec::generic_affine(a * slope, a * intercept + b, a * imag)
            }
            SeedKind::Constant { c } => SeedSpec::generic_affine(0.0, b, a * c),
            _ => Err(SeedError::UnsupportedComposition(self.family().name())),
        }
    }
}

/// Principal `sqrt(4 - eps^2 w^2)`; the cut of the radicand coincides with the
/// real rays `|w| >= 2/|eps|` excluded from the seed domain.
fn epsilon_root(eps: f64, w: Complex64) -> Complex64 {
    (Complex64::new(4.0, 0.0) - w * w * (eps * eps)).sqrt()
}

/// Anything that can play the role of `f` in `lambda = f(y - lambda x)`.
///
/// Implemented by [`SeedSpec`] and by the derived seeds the analysis module
/// builds on the fly (perturbed and affinely composed seeds).
pub trait SeedFunction {
    fn eval_at(&self, w: Complex64) -> Result<SeedEval, SeedError>;
    fn contains(&self, w: Complex64) -> bool;
    fn label(&self) -> &'static str;
}

impl SeedFunction for SeedSpec {
    fn eval_at(&self, w: Complex64) -> Result<SeedEval, SeedError> {
        self.eval(w)
    }
    fn contains(&self, w: Complex64) -> bool {
        self.domain_contains(w)
    }
    fn label(&self) -> &'static str {
        self.family().name()
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SeedKind::Constant { c } => write!(f, "const:{c}"),
            SeedKind::AffineDelta { delta } => write!(f, "delta:{delta}"),
            SeedKind::Epsilon { eps } => write!(f, "eps:{eps}"),
            SeedKind::Exponential => write!(f, "exp"),
            SeedKind::CauchyKernel { delta } => write!(f, "cauchy:{delta}"),
            SeedKind::GenericAffine { slope, intercept, imag } => {
                write!(f, "affine:{slope},{intercept},{imag}")
            }
            SeedKind::NonHoloTest { delta, c } => write!(f, "nonholo:{delta},{c}"),
        }
    }
}

/// Shell syntax `family[:p1[,p2...]]`, e.g. `delta:1`, `eps:0.5`, `exp`.
impl FromStr for SeedSpec {
    type Err = SeedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeedError::Parse(s.to_string());
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let params: Vec<f64> = match args {
            Some(a) => a
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        match (name, params.as_slice()) {
            ("const" | "constant", [c]) => SeedSpec::constant(*c),
            ("delta", [d]) => SeedSpec::affine_delta(*d),
            ("eps" | "epsilon", [e]) => SeedSpec::epsilon(*e),
            ("exp" | "exponential", []) => Ok(SeedSpec::exponential()),
            ("cauchy", [d]) => SeedSpec::cauchy_kernel(*d),
            ("affine", [a, b, d]) => SeedSpec::generic_affine(*a, *b, *d),
            ("nonholo", [d, c]) => SeedSpec::nonholo_test(*d, *c),
            _ => Err(bad()),
        }
    }
}

/// Wire form `{"family": "...", "params": {name: number}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSeed {
    pub family: SeedFamily,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl TryFrom<RawSeed> for SeedSpec {
    type Error = SeedError;

    fn try_from(raw: RawSeed) -> Result<Self, Self::Error> {
        let get = |name: &str| {
            raw.params.get(name).copied().ok_or_else(|| {
                SeedError::InvalidParameter(format!("{} seed requires parameter `{name}`", raw.family))
            })
        };
        match raw.family {
            SeedFamily::Constant => SeedSpec::constant(get("c")?),
            SeedFamily::AffineDelta => SeedSpec::affine_delta(get("delta")?),
            SeedFamily::Epsilon => SeedSpec::epsilon(get("eps")?),
            SeedFamily::Exponential => Ok(SeedSpec::exponential()),
            SeedFamily::CauchyKernel => SeedSpec::cauchy_kernel(get("delta")?),
            SeedFamily::GenericAffine => {
                SeedSpec::generic_affine(get("slope")?, get("intercept")?, get("imag")?)
            }
            SeedFamily::NonHoloTest => SeedSpec::nonholo_test(get("delta")?, get("c")?),
        }
    }
}

impl From<SeedSpec> for RawSeed {
    fn from(spec: SeedSpec) -> Self {
        let params: &[(&str, f64)] = match spec.kind {
            SeedKind::Constant { c } => &[("c", c)],
            SeedKind::AffineDelta { delta } => &[("delta", delta)],
            SeedKind::Epsilon { eps } => &[("eps", eps)],
            SeedKind::Exponential => &[],
            SeedKind::CauchyKernel { delta } => &[("delta", delta)],
            SeedKind::GenericAffine { slope, intercept, imag } => {
                &[("slope", slope), ("intercept", intercept), ("imag", imag)]
            }
            SeedKind::NonHoloTest { delta, c } => &[("delta", delta), ("c", c)],
        };
        RawSeed {
            family: spec.family(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// A tangent direction `h` at a seed.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationSpec {
    ConstantFn(Complex64),
    IdentityFn,
    /// `a w + b`
    AffineFn { a: Complex64, b: Complex64 },
    /// `coeff * w^degree`
    MonomialFn { coeff: Complex64, degree: u32 },
    /// The seed itself, `h = f`.
    WrapSeed(SeedSpec),
    /// Pointwise product `h1 * h2`.
    Product(Box<PerturbationSpec>, Box<PerturbationSpec>),
}

impl PerturbationSpec {
    pub fn product(h1: PerturbationSpec, h2: PerturbationSpec) -> Self {
        PerturbationSpec::Product(Box::new(h1), Box::new(h2))
    }

    /// `(h(w), h'(w))`.
    pub fn eval_with_derivative(&self, w: Complex64) -> Result<(Complex64, Complex64), SeedError> {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        Ok(match self {
            PerturbationSpec::ConstantFn(c) => (*c, zero),
            PerturbationSpec::IdentityFn => (w, one),
            PerturbationSpec::AffineFn { a, b } => (a * w + b, *a),
            PerturbationSpec::MonomialFn { coeff, degree } => match degree {
                0 => (*coeff, zero),
                n => {
                    let lower = w.powu(n - 1);
                    (coeff * lower * w, coeff * lower * (*n as f64))
                }
            },
            PerturbationSpec::WrapSeed(spec) => {
                let e = spec.eval(w)?;
                (e.value, e.d_dw)
            }
            PerturbationSpec::Product(h1, h2) => {
                let (v1, d1) = h1.eval_with_derivative(w)?;
                let (v2, d2) = h2.eval_with_derivative(w)?;
                (v1 * v2, d1 * v2 + v1 * d2)
            }
        })
    }

    pub fn eval(&self, w: Complex64) -> Result<Complex64, SeedError> {
        self.eval_with_derivative(w).map(|(v, _)| v)
    }
}

pub fn eval_seed(spec: &SeedSpec, w: Complex64) -> Result<SeedEval, SeedError> {
    spec.eval(w)
}

pub fn seed_domain_contains(spec: &SeedSpec, w: Complex64) -> bool {
    spec.domain_contains(w)
}

pub fn apply_affine(spec: &SeedSpec, a: f64, b: f64) -> Result<SeedSpec, SeedError> {
    spec.apply_affine(a, b)
}

pub fn eval_perturbation(h: &PerturbationSpec, w: Complex64) -> Result<Complex64, SeedError> {
    h.eval(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn affine_delta_value() {
        let e = SeedSpec::affine_delta(1.0).unwrap().eval(c(2.0, 0.0)).unwrap();
        assert_eq!(e.value, c(2.0, 1.0));
        assert_eq!(e.d_dw, c(1.0, 0.0));
        assert_eq!(e.d_dwbar, c(0.0, 0.0));
    }

    #[test]
    fn exponential_at_origin() {
        let e = SeedSpec::exponential().eval(c(0.0, 0.0)).unwrap();
        assert_eq!(e.value, c(0.0, 1.0));
        assert_eq!(e.d_dw, c(0.0, 1.0));
    }

    #[test]
    fn epsilon_at_origin() {
        let e = SeedSpec::epsilon(0.5).unwrap().eval(c(0.0, 0.0)).unwrap();
        assert!((e.value - c(0.0, 1.0)).norm() < 1e-15);
        assert!((e.d_dw - c(-0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cauchy_at_origin() {
        let e = SeedSpec::cauchy_kernel(1.0).unwrap().eval(c(0.0, 0.0)).unwrap();
        assert!((e.value - c(0.0, 1.0)).norm() < 1e-15);
        assert!((e.d_dw - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn domain_membership() {
        let eps = SeedSpec::epsilon(0.5).unwrap();
        assert!(!eps.domain_contains(c(5.0, 0.0)));
        assert!(!eps.domain_contains(c(-4.0, 0.0)));
        assert!(eps.domain_contains(c(3.99, 0.0)));
        assert!(eps.domain_contains(c(5.0, 0.1)));
        assert!(!SeedSpec::exponential().domain_contains(c(0.0, 2.0)));
        assert!(SeedSpec::affine_delta(0.5).unwrap().domain_contains(c(-1e6, 3e7)));
        let cauchy = SeedSpec::cauchy_kernel(2.0).unwrap();
        assert!(!cauchy.domain_contains(c(0.0, -2.0)));
        assert!(matches!(
            cauchy.eval(c(0.0, -2.0)),
            Err(SeedError::OutsideSeedDomain { .. })
        ));
        assert!(eps.eval(c(4.0, 0.0)).is_err());
    }

    #[test]
    fn affine_composition() {
        let d = SeedSpec::affine_delta(1.0).unwrap();
        assert_eq!(d.apply_affine(2.0, 0.0).unwrap(), SeedSpec::generic_affine(2.0, 0.0, 2.0).unwrap());
        assert_eq!(d.apply_affine(1.0, 0.0).unwrap(), SeedSpec::generic_affine(1.0, 0.0, 1.0).unwrap());
        let k = SeedSpec::constant(1.0).unwrap();
        assert_eq!(k.apply_affine(3.0, 2.0).unwrap(), SeedSpec::generic_affine(0.0, 2.0, 3.0).unwrap());
        assert!(matches!(
            SeedSpec::exponential().apply_affine(2.0, 0.0),
            Err(SeedError::UnsupportedComposition(_))
        ));
        assert!(d.apply_affine(-1.0, 0.0).is_err());
    }

    #[test]
    fn generic_affine_matches_delta_family() {
        let d = SeedSpec::affine_delta(0.7).unwrap();
        let g = SeedSpec::generic_affine(1.0, 0.0, 0.7).unwrap();
        for w in [c(0.3, -1.0), c(-2.0, 0.5)] {
            assert_eq!(d.eval(w).unwrap(), g.eval(w).unwrap());
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(SeedSpec::affine_delta(0.0).is_err());
        assert!(SeedSpec::constant(-1.0).is_err());
        assert!(SeedSpec::epsilon(0.0).is_err());
        assert!(SeedSpec::cauchy_kernel(f64::NAN).is_err());
        assert!(SeedSpec::generic_affine(1.0, 0.0, 0.0).is_err());
        assert!(SeedSpec::epsilon(-0.5).is_ok());
    }

    #[test]
    fn perturbations() {
        let w = c(1.08824, -0.31320);
        assert_eq!(PerturbationSpec::IdentityFn.eval(w).unwrap(), w);
        assert_eq!(PerturbationSpec::ConstantFn(c(1.0, 0.0)).eval(c(7.0, 3.0)).unwrap(), c(1.0, 0.0));
        let sq = PerturbationSpec::MonomialFn { coeff: c(1.0, 0.0), degree: 2 };
        assert!((sq.eval(c(1.0, 1.0)).unwrap() - c(0.0, 2.0)).norm() < 1e-15);
        let (_, d) = sq.eval_with_derivative(c(1.0, 1.0)).unwrap();
        assert!((d - c(2.0, 2.0)).norm() < 1e-15);
        let p = PerturbationSpec::product(PerturbationSpec::IdentityFn, sq);
        assert!((p.eval(c(2.0, 0.0)).unwrap() - c(8.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn shell_syntax() {
        assert_eq!("delta:1".parse::<SeedSpec>().unwrap(), SeedSpec::affine_delta(1.0).unwrap());
        assert_eq!("eps:0.5".parse::<SeedSpec>().unwrap(), SeedSpec::epsilon(0.5).unwrap());
        assert_eq!("exp".parse::<SeedSpec>().unwrap(), SeedSpec::exponential());
        assert_eq!(
            "affine:2,0,1".parse::<SeedSpec>().unwrap(),
            SeedSpec::generic_affine(2.0, 0.0, 1.0).unwrap()
        );
        assert_eq!("nonholo:1,0.2".parse::<SeedSpec>().unwrap(), SeedSpec::nonholo_test(1.0, 0.2).unwrap());
        assert!("delta".parse::<SeedSpec>().is_err());
        assert!("exp:1".parse::<SeedSpec>().is_err());
        assert!("bogus:1".parse::<SeedSpec>().is_err());
        for s in ["delta:1", "eps:0.5", "exp", "cauchy:2", "affine:2,0,1", "nonholo:1,0.2", "const:3"] {
            let spec: SeedSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<SeedSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn json_descriptor() {
        let spec = SeedSpec::generic_affine(2.0, -1.0, 0.5).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(text, r#"{"family":"generic_affine","params":{"imag":0.5,"intercept":-1.0,"slope":2.0}}"#);
        let back: SeedSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let exp: SeedSpec = serde_json::from_str(r#"{"family":"exponential"}"#).unwrap();
        assert_eq!(exp, SeedSpec::exponential());
        assert!(serde_json::from_str::<SeedSpec>(r#"{"family":"affine_delta","params":{"delta":-1}}"#).is_err());
        assert!(serde_json::from_str::<SeedSpec>(r#"{"family":"epsilon","params":{}}"#).is_err());
    }
}
