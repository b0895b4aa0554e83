//! Goodness-of-fit test assembly: observed statistic, resampled null
//! ensemble, empirical p-value, and plot-ready path payloads.
//!
//! The supremum is taken over the test's lattice, either of the raw
//! surfaces (unstandardized) or after dividing every surface - observed
//! and resampled alike - pointwise by the across-path standard deviation.
//! The p-value is the fraction of resampled suprema at or above the
//! observed one, so ties favor the null.

use serde::Serialize;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::estimate::{check_identifiable, fit, Estimator, FittedModel};
use crate::perturb::{bundle_from_ensemble, compute_ensemble, PathBundle, PathContext};
use crate::process::{observed_process, EvalGrid, ProcessSurface};
pub use crate::process::TestKind;
use crate::residual::{build_frame, estimate_baseline_densities, BaselineDensities, ResidualFrame};

/// Default z-grid cap for the omnibus lattice.
pub const DEFAULT_GRID_CAP: usize = 200;
/// Default number of resampled paths.
pub const DEFAULT_PATHS: usize = 500;
/// Below this many paths the p-value resolution is too coarse to trust.
pub const MIN_RECOMMENDED_PATHS: usize = 50;
/// How many resampled paths the plot payload keeps.
const PLOT_PATHS: usize = 50;

#[derive(Debug, Clone, Serialize)]
pub struct PlotPayload {
    /// x-axis convention: "log_residual_rank" (t profile) or "z_rank".
    pub axis: String,
    pub observed: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GofReport {
    pub test: TestKind,
    pub estimator: Estimator,
    pub standardized: bool,
    pub w_obs_sup: f64,
    pub path_sups: Vec<f64>,
    pub p_value: f64,
    pub k_requested: usize,
    pub k_effective: usize,
    pub failed_paths: usize,
    pub seed: u64,
    pub plot: PlotPayload,
}

impl GofReport {
    /// Tidy CSV of the plot payload: path_id, x, value.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("path_id,x,value\n");
        for (x, v) in self.plot.observed.iter().enumerate() {
            out.push_str(&format!("obs,{},{v}\n", x + 1));
        }
        for (pid, path) in self.plot.paths.iter().enumerate() {
            for (x, v) in path.iter().enumerate() {
                out.push_str(&format!("{},{},{v}\n", pid + 1, x + 1));
            }
        }
        out
    }
}

/// One fitted model with its residual frame and densities, reusable
/// across the different test grids.
pub struct GofSession {
    /// Centered-covariate copy of the input; every surface and refit in
    /// the session lives in this parametrization (the fitted
    /// coefficients and test statistics are invariant to the shift, the
    /// resampled correction terms require it).
    data: SurvivalDataset,
    pub model: FittedModel,
    frame: ResidualFrame,
    dens: BaselineDensities,
    grid_cap: usize,
}

impl GofSession {
    pub fn new(data: &SurvivalDataset, estimator: Estimator, grid_cap: usize) -> Result<Self> {
        data.validate()?;
        check_identifiable(data)?;
        let data = data.centered();
        let model = fit(&data, estimator, None)?;
        if !model.converged {
            return Err(Error::NonConvergence(format!(
                "{estimator} fit did not converge"
            )));
        }
        let frame = build_frame(&data, &model.beta);
        let dens = estimate_baseline_densities(&frame)?;
        Ok(GofSession {
            data,
            model,
            frame,
            dens,
            grid_cap,
        })
    }

    /// Run one test, returning the unstandardized and standardized reports
    /// built from a single resampled ensemble.
    pub fn run_pair(&self, test: TestKind, k: usize, seed: u64) -> Result<(GofReport, GofReport)> {
        Ok(self.run_tests(&[test], k, seed)?.pop().unwrap())
    }

    /// Run several tests against one shared set of weighted refits; the
    /// expensive per-path work is done once and only the grid evaluation
    /// differs between tests.
    pub fn run_tests(
        &self,
        tests: &[TestKind],
        k: usize,
        seed: u64,
    ) -> Result<Vec<(GofReport, GofReport)>> {
        for test in tests {
            if let TestKind::Form(q) = *test {
                if q >= self.data.p() {
                    return Err(Error::Validation(format!(
                        "form test column {q} out of range (p = {})",
                        self.data.p()
                    )));
                }
            }
        }
        let ensemble = compute_ensemble(&self.data, &self.model, &self.frame, k, seed)?;
        tests
            .iter()
            .map(|&test| {
                let grid = EvalGrid::build(&self.data, &self.frame, test, self.grid_cap);
                let observed = observed_process(&self.data, &self.frame, &grid);
                let ctx =
                    PathContext::new(&self.data, &self.model, &self.frame, &self.dens, &grid);
                let bundle = bundle_from_ensemble(&ctx, &ensemble);
                if bundle.k_effective == 0 {
                    return Err(Error::Numerical("all resampled paths failed".into()));
                }
                let unstd = self.assemble_report(test, false, &grid, &observed, &bundle, k, seed);
                let std = self.assemble_report(test, true, &grid, &observed, &bundle, k, seed);
                Ok((unstd, std))
            })
            .collect()
    }

    fn assemble_report(
        &self,
        test: TestKind,
        standardized: bool,
        grid: &EvalGrid,
        observed: &ProcessSurface,
        bundle: &PathBundle,
        k: usize,
        seed: u64,
    ) -> GofReport {
        let sd = if standardized {
            Some(bundle.pointwise_sd.as_slice())
        } else {
            None
        };
        let w_obs_sup = sup_abs(&observed.values, sd);
        let path_sups: Vec<f64> = bundle
            .surfaces
            .iter()
            .map(|s| sup_abs(&s.values, sd))
            .collect();
        let hits = path_sups.iter().filter(|&&s| s >= w_obs_sup).count();
        let p_value = hits as f64 / bundle.k_effective as f64;
        let plot = build_plot(grid, observed, bundle, sd);
        GofReport {
            test,
            estimator: self.model.estimator,
            standardized,
            w_obs_sup,
            path_sups,
            p_value,
            k_requested: k,
            k_effective: bundle.k_effective,
            failed_paths: bundle.failed,
            seed,
            plot,
        }
    }
}

fn sup_abs(values: &[f64], sd: Option<&[f64]>) -> f64 {
    match sd {
        None => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        Some(sd) => values
            .iter()
            .zip(sd)
            .fold(0.0f64, |m, (v, s)| m.max((v / s).abs())),
    }
}

/// Observed path plus the first resampled paths on the display profile:
/// the full z sweep for link/form, the argmax-z column's t profile for
/// the omnibus lattice.
fn build_plot(
    grid: &EvalGrid,
    observed: &ProcessSurface,
    bundle: &PathBundle,
    sd: Option<&[f64]>,
) -> PlotPayload {
    let n_z = grid.z_points.len();
    let scaled = |values: &[f64], cell: usize| match sd {
        None => values[cell],
        Some(sd) => values[cell] / sd[cell],
    };
    let (axis, cells): (String, Vec<usize>) = if grid.t_values.len() == 1 {
        ("z_rank".into(), (0..n_z).collect())
    } else {
        // Column holding the largest observed standardized-or-raw value.
        let argmax = (0..observed.values.len())
            .max_by(|&a, &b| {
                scaled(&observed.values, a)
                    .abs()
                    .total_cmp(&scaled(&observed.values, b).abs())
            })
            .unwrap_or(0);
        let zi = argmax % n_z;
        (
            "log_residual_rank".into(),
            (0..grid.t_values.len()).map(|ti| ti * n_z + zi).collect(),
        )
    };
    let observed_vals: Vec<f64> = cells.iter().map(|&c| scaled(&observed.values, c)).collect();
    let paths: Vec<Vec<f64>> = bundle
        .surfaces
        .iter()
        .take(PLOT_PATHS)
        .map(|s| cells.iter().map(|&c| scaled(&s.values, c)).collect())
        .collect();
    PlotPayload {
        axis,
        observed: observed_vals,
        paths,
    }
}

/// Fit once and run a single test.
pub fn run_test(
    data: &SurvivalDataset,
    estimator: Estimator,
    test: TestKind,
    standardized: bool,
    k: usize,
    seed: u64,
) -> Result<GofReport> {
    let session = GofSession::new(data, estimator, DEFAULT_GRID_CAP)?;
    let (unstd, std) = session.run_pair(test, k, seed)?;
    Ok(if standardized { std } else { unstd })
}

/// One functional-form test per covariate, sharing the fitted model and
/// the multiplier draws (paths are keyed by (seed, path_index) only, so
/// every covariate's ensemble reuses the same weights).
pub fn run_all_forms(
    data: &SurvivalDataset,
    estimator: Estimator,
    standardized: bool,
    k: usize,
    seed: u64,
) -> Result<Vec<GofReport>> {
    let session = GofSession::new(data, estimator, DEFAULT_GRID_CAP)?;
    (0..data.p())
        .map(|q| {
            let (unstd, std) = session.run_pair(TestKind::Form(q), k, seed)?;
            Ok(if standardized { std } else { unstd })
        })
        .collect()
}
