//! Numerical laboratory for psi-Hilfer fractional integrodifferential equations with delay.
//!
//! - [`special_functions`]: gamma, beta and Mittag-Leffler functions.
//! - [`psi_calculus`]: grids, psi-fractional integrals, the Hilfer derivative, weighted norms.
//! - [`problem_model`]: the delay problem and its contraction hypotheses.
//! - [`picard_solver`]: successive approximation of the equivalent integral equation.
//! - [`stability_lab`]: Ulam-Hyers-Mittag-Leffler stability experiments.

pub mod error;
pub mod picard_solver;
pub mod problem_model;
pub mod psi_calculus;
pub mod special_functions;
pub mod stability_lab;

pub use error::{Error, Result};
pub use picard_solver::{picard_step, solve, NormKind, SolveConfig, SolveResult};
pub use problem_model::{check_bielecki, check_theta, DelayFFIDE, FractionalOrder, HypothesisReport};
pub use psi_calculus::{Grid, GridSpacing, PsiFunction, Trajectory};
pub use stability_lab::{Perturbation, PerturbationShape, StabilityLab, StabilityReport};
