//! Multiplier-resampled null paths of the diagnostic process.
//!
//! Each path draws i.i.d. unit exponential weights phi, re-solves the
//! weighted estimating equation for beta*, and assembles
//!
//!   What = T1 - sqrt(n) (f_pi + int g_pi dLambda)' (beta - beta*) - T3,
//!
//! where T1 integrates (pi_i - E_pi) against dMhat_i with factors
//! (phi_i - 1), and T3 is a Stieltjes sum of S_pi against the difference
//! of the two cumulative-hazard step functions on the shared grid of the
//! anchor fit. With phi = 1 every term vanishes identically.
//!
//! The expensive, grid-independent part of a path (the weighted refit and
//! the hazard difference) lives in [`PathFit`]; a [`PathEnsemble`] of
//! those can be reused across the omnibus, link, and form grids.

use rayon::prelude::*;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::estimate::{fit_perturbed, FittedModel, PerturbationWeights};
use crate::process::{
    density_time_factor, indicator_weight, EvalGrid, PiDensityTerms, ProcessSurface,
};
use crate::residual::{build_frame, BaselineDensities, ResidualFrame};

/// Clamp for pointwise standard deviations; cells where every path is
/// zero would otherwise divide 0 by 0 during standardization.
pub const SD_FLOOR: f64 = 1e-10;

/// Grid-independent ingredients of one resampled path.
#[derive(Debug, Clone)]
pub struct PathFit {
    pub beta_star: Vec<f64>,
    /// beta - beta*.
    beta_diff: Vec<f64>,
    /// phi_i - 1 in residual-sorted order.
    w_sorted: Vec<f64>,
    /// Per jump value: sum of (phi - 1) over tied events, and over the
    /// risk set.
    ev0: Vec<f64>,
    risk0: Vec<f64>,
    /// Increments of Lambda(., beta) - Lambda(., beta*) on the anchor
    /// jump grid.
    dl_diff: Vec<f64>,
}

impl PathFit {
    /// Refit under `phi` and precompute everything that does not depend
    /// on the evaluation grid.
    pub fn compute(
        data: &SurvivalDataset,
        anchor: &FittedModel,
        frame: &ResidualFrame,
        phi: &PerturbationWeights,
    ) -> Result<PathFit> {
        let refit = fit_perturbed(data, anchor.estimator, phi, anchor)?;
        if !refit.converged {
            return Err(Error::NonConvergence(format!(
                "weighted {} fit did not converge on path {}",
                anchor.estimator, phi.path_index
            )));
        }
        Ok(Self::with_beta_star(data, anchor, frame, phi, refit.beta))
    }

    /// Same precomputation with beta* supplied (used with beta* pinned at
    /// the anchor, which isolates T1).
    pub fn with_beta_star(
        data: &SurvivalDataset,
        anchor: &FittedModel,
        frame: &ResidualFrame,
        phi: &PerturbationWeights,
        beta_star: Vec<f64>,
    ) -> PathFit {
        let n = frame.n();
        let m = frame.jump_values.len();
        let w: Vec<f64> = phi.phi.iter().map(|f| f - 1.0).collect();
        let w_sorted: Vec<f64> = frame.order.iter().map(|&i| w[i]).collect();

        let mut prefix_w = vec![0.0; n + 1];
        for k in 0..n {
            prefix_w[k + 1] = prefix_w[k] + w_sorted[k];
        }
        let total_w = prefix_w[n];
        let mut ev0 = vec![0.0; m];
        let mut risk0 = vec![0.0; m];
        for (k, &(start, end)) in frame.jump_spans.iter().enumerate() {
            risk0[k] = total_w - prefix_w[start];
            ev0[k] = (start..end)
                .filter(|&s| frame.delta[frame.order[s]] == 1)
                .map(|s| w_sorted[s])
                .sum();
        }

        // Cumulative-hazard difference on the shared grid; the beta* step
        // function is evaluated at the anchor's jump values.
        let star_frame = build_frame(data, &beta_star);
        let mut dl_diff = Vec::with_capacity(m);
        let mut prev_star = 0.0;
        for (k, &v) in frame.jump_values.iter().enumerate() {
            let lam_star = star_frame.lambda_at(v);
            dl_diff.push(frame.dlambda[k] - (lam_star - prev_star));
            prev_star = lam_star;
        }

        let beta_diff: Vec<f64> = anchor
            .beta
            .iter()
            .zip(&beta_star)
            .map(|(a, b)| a - b)
            .collect();
        PathFit {
            beta_star,
            beta_diff,
            w_sorted,
            ev0,
            risk0,
            dl_diff,
        }
    }
}

/// K path fits sharing one anchor; failed refits are kept as `None`.
pub struct PathEnsemble {
    pub seed: u64,
    pub k_requested: usize,
    pub fits: Vec<Option<PathFit>>,
}

impl PathEnsemble {
    pub fn failed(&self) -> usize {
        self.fits.iter().filter(|f| f.is_none()).count()
    }
}

/// Draw and refit K paths; path i uses the (seed, i + 1) weight stream.
/// Aborts when more than 10% of refits fail.
pub fn compute_ensemble(
    data: &SurvivalDataset,
    anchor: &FittedModel,
    frame: &ResidualFrame,
    k: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if k == 0 {
        return Err(Error::Validation("need at least one path".into()));
    }
    let n = data.n();
    let fits: Vec<Option<PathFit>> = (1..=k as u64)
        .into_par_iter()
        .map(|path_index| {
            let phi = PerturbationWeights::exponential(n, seed, path_index);
            PathFit::compute(data, anchor, frame, &phi).ok()
        })
        .collect();
    let failed = fits.iter().filter(|f| f.is_none()).count();
    if failed * 10 > k {
        return Err(Error::Numerical(format!(
            "{failed} of {k} resampled fits failed to converge"
        )));
    }
    Ok(PathEnsemble {
        seed,
        k_requested: k,
        fits,
    })
}

/// Per-grid precomputation shared by every path.
struct ColumnData {
    /// Selection flags in residual-sorted order.
    pi_sorted: Vec<bool>,
    /// S_pi and E_pi = S_pi / S0 on the jump grid.
    s_pi: Vec<f64>,
    e_pi: Vec<f64>,
    /// Coefficient vectors of f_pi and g_pi.
    d_pi: Vec<f64>,
    c_pi: Vec<f64>,
}

pub struct PathContext<'a> {
    pub data: &'a SurvivalDataset,
    pub anchor: &'a FittedModel,
    pub frame: &'a ResidualFrame,
    pub dens: &'a BaselineDensities,
    pub grid: &'a EvalGrid,
    columns: Vec<ColumnData>,
    /// For each grid time: number of jump values <= t.
    kmax_t: Vec<usize>,
    /// f0(t) t at each grid time.
    f0fac_t: Vec<f64>,
    /// Cumulative sum of g0(v_k) v_k dLambda_k up to each grid time.
    gcum_t: Vec<f64>,
}

impl<'a> PathContext<'a> {
    pub fn new(
        data: &'a SurvivalDataset,
        anchor: &'a FittedModel,
        frame: &'a ResidualFrame,
        dens: &'a BaselineDensities,
        grid: &'a EvalGrid,
    ) -> Self {
        let n = frame.n();
        let m = frame.jump_values.len();

        let columns = grid
            .z_points
            .iter()
            .map(|z| {
                let pi: Vec<f64> = (0..n).map(|i| indicator_weight(data.z(i), z)).collect();
                let pi_sorted: Vec<bool> =
                    frame.order.iter().map(|&i| pi[i] == 1.0).collect();
                let mut count_below = vec![0.0; m];
                let mut seen = 0.0;
                let mut pos = 0;
                for (k, &(start, _)) in frame.jump_spans.iter().enumerate() {
                    while pos < start {
                        if pi_sorted[pos] {
                            seen += 1.0;
                        }
                        pos += 1;
                    }
                    count_below[k] = seen;
                }
                let total = pi_sorted.iter().filter(|&&b| b).count() as f64;
                let s_pi: Vec<f64> = count_below.iter().map(|b| total - b).collect();
                let e_pi: Vec<f64> = s_pi
                    .iter()
                    .zip(&frame.s0)
                    .map(|(s, s0)| s / s0)
                    .collect();
                let PiDensityTerms { d_pi, c_pi } = crate::process::pi_density_terms(data, z);
                ColumnData {
                    pi_sorted,
                    s_pi,
                    e_pi,
                    d_pi,
                    c_pi,
                }
            })
            .collect();

        let kmax_t: Vec<usize> = grid
            .t_values
            .iter()
            .map(|&t| frame.jump_values.partition_point(|&v| v <= t))
            .collect();
        let f0fac_t: Vec<f64> = grid
            .t_values
            .iter()
            .map(|&t| density_time_factor(&dens.f0_hat, t))
            .collect();
        let mut gcum_jump = Vec::with_capacity(m);
        let mut acc = 0.0;
        for (k, &v) in frame.jump_values.iter().enumerate() {
            acc += density_time_factor(&dens.g0_hat, v) * frame.dlambda[k];
            gcum_jump.push(acc);
        }
        let gcum_t: Vec<f64> = kmax_t
            .iter()
            .map(|&k| if k == 0 { 0.0 } else { gcum_jump[k - 1] })
            .collect();

        PathContext {
            data,
            anchor,
            frame,
            dens,
            grid,
            columns,
            kmax_t,
            f0fac_t,
            gcum_t,
        }
    }

    /// One resampled path from fresh weights. Fails with `NonConvergence`
    /// when the weighted fit does not converge.
    pub fn perturbed_path(&self, phi: &PerturbationWeights) -> Result<ProcessSurface> {
        let fit = PathFit::compute(self.data, self.anchor, self.frame, phi)?;
        Ok(self.assemble(&fit))
    }

    pub fn assemble(&self, path: &PathFit) -> ProcessSurface {
        self.assemble_signed(path, 1.0, 1.0)
    }

    /// Sign-parameterized assembly, used to validate the orientation of
    /// the two correction terms against the exact weighted bootstrap.
    pub fn assemble_signed(&self, path: &PathFit, s2: f64, s3: f64) -> ProcessSurface {
        let frame = self.frame;
        let n = frame.n();
        let m = frame.jump_values.len();
        let p = self.data.p();
        let scale = 1.0 / (n as f64).sqrt();
        let sqrt_n = (n as f64).sqrt();

        let n_t = self.grid.t_values.len();
        let n_z = self.grid.z_points.len();
        let mut values = vec![0.0; n_t * n_z];
        let mut prefix_sel = vec![0.0; n + 1];
        for (zi, col) in self.columns.iter().enumerate() {
            for k in 0..n {
                prefix_sel[k + 1] =
                    prefix_sel[k] + if col.pi_sorted[k] { path.w_sorted[k] } else { 0.0 };
            }
            let total_sel = prefix_sel[n];

            // Running T1 and T3 over the jump grid.
            let mut cum1 = Vec::with_capacity(m);
            let mut cum3 = Vec::with_capacity(m);
            let mut a1 = 0.0;
            let mut a3 = 0.0;
            for k in 0..m {
                let (start, end) = frame.jump_spans[k];
                let evsel: f64 = (start..end)
                    .filter(|&s| frame.delta[frame.order[s]] == 1 && col.pi_sorted[s])
                    .map(|s| path.w_sorted[s])
                    .sum();
                let risksel = total_sel - prefix_sel[start];
                a1 += evsel - col.e_pi[k] * path.ev0[k]
                    - frame.dlambda[k] * (risksel - col.e_pi[k] * path.risk0[k]);
                a3 += col.s_pi[k] * path.dl_diff[k];
                cum1.push(a1);
                cum3.push(a3);
            }

            let d_dot: f64 = (0..p).map(|q| col.d_pi[q] * path.beta_diff[q]).sum();
            let c_dot: f64 = (0..p).map(|q| col.c_pi[q] * path.beta_diff[q]).sum();
            for ti in 0..n_t {
                let kmax = self.kmax_t[ti];
                let t1 = if kmax == 0 { 0.0 } else { cum1[kmax - 1] };
                let t3 = if kmax == 0 { 0.0 } else { cum3[kmax - 1] };
                let t2 = sqrt_n * (self.f0fac_t[ti] * d_dot + self.gcum_t[ti] * c_dot);
                values[ti * n_z + zi] = scale * t1 + s2 * t2 + s3 * scale * t3;
            }
        }
        ProcessSurface::from_values(n_t, n_z, values)
    }
}

/// T1 alone, for oracle comparisons: the (phi - 1)-weighted integral of
/// (pi_i - E_pi) against dMhat_i, with beta* pinned at the anchor so the
/// other terms vanish.
pub fn term1_surface(
    data: &SurvivalDataset,
    anchor: &FittedModel,
    frame: &ResidualFrame,
    dens: &BaselineDensities,
    grid: &EvalGrid,
    phi: &PerturbationWeights,
) -> ProcessSurface {
    let ctx = PathContext::new(data, anchor, frame, dens, grid);
    let path = PathFit::with_beta_star(data, anchor, frame, phi, anchor.beta.clone());
    ctx.assemble(&path)
}

#[derive(Debug)]
pub struct PathBundle {
    pub k_requested: usize,
    pub k_effective: usize,
    pub failed: usize,
    pub seed: u64,
    /// Successful surfaces in path-index order.
    pub surfaces: Vec<ProcessSurface>,
    /// Sample standard deviation across paths per lattice cell, clamped
    /// below at `SD_FLOOR`.
    pub pointwise_sd: Vec<f64>,
}

/// Evaluate a precomputed ensemble on one grid.
pub fn bundle_from_ensemble(ctx: &PathContext, ensemble: &PathEnsemble) -> PathBundle {
    let surfaces: Vec<ProcessSurface> = ensemble
        .fits
        .par_iter()
        .flatten()
        .map(|f| ctx.assemble(f))
        .collect();
    let k_eff = surfaces.len();
    let cells = ctx.grid.n_cells();
    let mut pointwise_sd = vec![SD_FLOOR; cells];
    if k_eff >= 2 {
        for c in 0..cells {
            let mean: f64 = surfaces.iter().map(|s| s.values[c]).sum::<f64>() / k_eff as f64;
            let var: f64 = surfaces
                .iter()
                .map(|s| (s.values[c] - mean).powi(2))
                .sum::<f64>()
                / (k_eff - 1) as f64;
            pointwise_sd[c] = var.sqrt().max(SD_FLOOR);
        }
        // Winsorize the standard-deviation surface from below at a
        // censoring-dependent quantile (sqrt of the censoring rate for the
        // two-argument surface, the rate itself for the z-only tests).
        // Near-degenerate lattice cells (early residuals, extreme
        // covariate thresholds) otherwise turn the standardized field
        // into pure noise amplification there and dominate every
        // supremum.
        let n = ctx.frame.n();
        let events: f64 = ctx.frame.delta.iter().map(|&d| d as f64).sum();
        let censoring = (1.0 - events / n as f64).clamp(0.0, 1.0);
        let prob = match ctx.grid.kind {
            crate::process::TestKind::Omnibus => censoring.sqrt(),
            _ => censoring,
        };
        let lo = quantile(&pointwise_sd, prob);
        for s in pointwise_sd.iter_mut() {
            if *s < lo {
                *s = lo;
            }
        }
    }
    PathBundle {
        k_requested: ensemble.k_requested,
        k_effective: k_eff,
        failed: ensemble.failed(),
        seed: ensemble.seed,
        surfaces,
        pointwise_sd,
    }
}

/// Linearly interpolated sample quantile (R type 7).
fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let k = h.floor() as usize;
    if k + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[k] + (h - k as f64) * (sorted[k + 1] - sorted[k])
    }
}

/// Draw, refit, and evaluate K paths on one grid in a single call.
pub fn generate_bundle(ctx: &PathContext, k: usize, seed: u64) -> Result<PathBundle> {
    let ensemble = compute_ensemble(ctx.data, ctx.anchor, ctx.frame, k, seed)?;
    Ok(bundle_from_ensemble(ctx, &ensemble))
}
