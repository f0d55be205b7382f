//! Burgers transform toolkit: solves `lambda = f(y - lambda x)` for a catalog of
//! seeds and derives the geometric fields and consistency residuals from it.

pub mod analysis;
pub mod fields;
pub mod lambert_w;
pub mod seeds;
pub mod solver;

pub use num_complex::Complex64;

pub use lambert_w::{lambert_w0, lambert_w0_over_x, LambertResult};
pub use seeds::{PerturbationSpec, SeedError, SeedEval, SeedFamily, SeedFunction, SeedKind, SeedSpec};
pub use solver::{Outcome, Solution, SolveError, SolveStatus, SolverConfig};
pub use fields::{GridField, GridSpec, SpectralSample};
pub use analysis::{AnalysisError, FDConfig, FDScheme, ResidualReport};
