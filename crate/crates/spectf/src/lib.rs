//! Adaptive scalar-on-function regression by trend filtering.
//!
//! A scalar response is regressed on a densely sampled functional covariate
//! (for example a mid-infrared absorbance spectrum) by penalizing the l1 norm
//! of discrete derivatives of the functional coefficient. The solver is a
//! specialized ADMM whose auxiliary update is an exact 1-D fused-lasso
//! subproblem, which keeps the estimate piecewise polynomial with data-chosen
//! knots. On top of the core solver the crate provides:
//!
//! - partial functional linear models with unpenalized scalar covariates,
//! - Bernoulli and Poisson responses via a penalized Fisher-scoring outer loop,
//! - mixed penalties on two derivative orders at once,
//! - wild-bootstrap pointwise variability bands for Gaussian fits,
//! - a synthetic benchmark harness and CSV ingestion for wide-format spectra.

pub mod admm;
pub mod bspline;
pub mod diffops;
pub mod error;
pub mod fused1d;
pub mod inference;
pub mod ingest;
mod linalg;
pub mod models;
pub mod simulation;

pub use admm::{
    admm_solve, lambda_max, mixed_solve, solve_path, AdmmConfig, AdmmState, PenaltySpec,
    PenaltyTerm, RhoRule,
};
pub use diffops::{AugmentedOperator, DifferenceOperator};
pub use error::{Result, SpectfError};
pub use fused1d::{fused_lasso_1d, kkt_check, FusedProblem};
pub use inference::{draw_auxiliary, wild_bootstrap, AuxiliaryLaw, BootstrapBands};
pub use models::{
    cross_validate, fit_gaussian, fit_glm, fit_spline_baseline, predict, CvReport, Family, TfFit,
};
pub use simulation::{discrete_mise, gen_scenario, mise, run_table1, ScenarioSpec, SyntheticDataset};
