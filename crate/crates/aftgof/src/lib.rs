//! Semiparametric accelerated failure time (AFT) models for right-censored
//! data, with resampling-based goodness-of-fit tests.
//!
//! The model links the log failure time linearly to covariates,
//! `log T = -Z'b + eps`, with the error distribution left unspecified.
//! Three estimators are provided: the non-smooth Gehan rank estimator
//! (`mns`), its induced-smoothed version (`mis`), and an iterative
//! least-squares estimator (`mls`). Model adequacy is checked with
//! Kolmogorov-type supremum tests (omnibus, link function, functional form)
//! built on cumulative sums of martingale residuals, calibrated by a
//! multiplier bootstrap.

pub mod data;
pub mod error;
pub mod estimate;
pub mod gof;
pub mod linalg;
pub mod perturb;
pub mod process;
pub mod residual;
pub mod rng;
pub mod simulate;

pub use data::{load_csv, standardize, StandardizationRecord, SurvivalDataset};
pub use error::{Error, Result};
pub use estimate::{fit, fit_perturbed, Estimator, FittedModel, PerturbationWeights};
pub use gof::{run_all_forms, run_test, GofReport, GofSession, TestKind};
pub use process::{observed_process, EvalGrid, ProcessSurface};
pub use residual::{build_frame, estimate_baseline_densities, BaselineDensities, ResidualFrame};
pub use simulate::{
    calibrate_tau, generate, run_harness, HarnessConfig, HarnessResult, Scenario, ScenarioConfig,
};
