//! The observed diagnostic process W(t, z): a cumulative sum of martingale
//! residuals over subjects selected by covariate thresholds, evaluated on a
//! (t-grid x z-grid) lattice. Also the threshold-restricted risk averages
//! and density terms that the resampled paths need.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::residual::{BaselineDensities, ResidualFrame};

/// Which diagnostic a grid belongs to. `Form(q)` varies only covariate
/// column q; `Link` varies the full covariate vector at t = infinity;
/// `Omnibus` sweeps t and z jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Omnibus,
    Link,
    Form(usize),
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestKind::Omnibus => f.write_str("omnibus"),
            TestKind::Link => f.write_str("link"),
            TestKind::Form(q) => write!(f, "form({q})"),
        }
    }
}

/// Evaluation lattice. `t_values` are ascending exp-scale residual times
/// (`f64::INFINITY` stands for the t = infinity section); each entry of
/// `z_points` is a full p-vector of thresholds, with `f64::INFINITY`
/// marking coordinates the test does not restrict.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    pub kind: TestKind,
    pub t_values: Vec<f64>,
    pub z_points: Vec<Vec<f64>>,
}

impl EvalGrid {
    pub fn build(
        data: &SurvivalDataset,
        frame: &ResidualFrame,
        kind: TestKind,
        grid_cap: usize,
    ) -> Self {
        match kind {
            TestKind::Omnibus => EvalGrid {
                kind,
                t_values: frame.jump_values.clone(),
                z_points: covariate_thresholds(data, grid_cap),
            },
            TestKind::Link => EvalGrid {
                kind,
                t_values: vec![f64::INFINITY],
                z_points: covariate_thresholds(data, usize::MAX),
            },
            TestKind::Form(q) => {
                let mut vals: Vec<f64> = (0..data.n()).map(|i| data.z(i)[q]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                let p = data.p();
                let z_points = vals
                    .into_iter()
                    .map(|v| {
                        let mut z = vec![f64::INFINITY; p];
                        z[q] = v;
                        z
                    })
                    .collect();
                EvalGrid {
                    kind,
                    t_values: vec![f64::INFINITY],
                    z_points,
                }
            }
        }
    }

    pub fn n_cells(&self) -> usize {
        self.t_values.len() * self.z_points.len()
    }
}

/// Distinct observed covariate rows, sorted for determinism. Above `cap`
/// rows the grid switches to `cap` covariate-wise quantile vectors.
fn covariate_thresholds(data: &SurvivalDataset, cap: usize) -> Vec<Vec<f64>> {
    let n = data.n();
    let p = data.p();
    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| data.z(i).to_vec()).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.dedup();
    if rows.len() <= cap {
        return rows;
    }
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|q| {
            let mut c: Vec<f64> = (0..n).map(|i| data.z(i)[q]).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    for c in cols.iter_mut() {
        c.dedup();
    }
    let mut out: Vec<Vec<f64>> = (0..cap)
        .map(|k| {
            let level = (k + 1) as f64 / cap as f64;
            (0..p)
                .map(|q| {
                    let c = &cols[q];
                    let idx = ((level * c.len() as f64).ceil() as usize)
                        .clamp(1, c.len())
                        - 1;
                    c[idx]
                })
                .collect()
        })
        .collect();
    out.dedup();
    out
}

/// pi_i(z) = prod_q I(Z_iq <= z_q); infinite thresholds always pass.
pub fn indicator_weight(z_i: &[f64], z: &[f64]) -> f64 {
    if z_i.iter().zip(z).all(|(a, b)| a <= b) {
        1.0
    } else {
        0.0
    }
}

/// Values on a grid, row-major (t index major, z index minor).
#[derive(Debug, Clone)]
pub struct ProcessSurface {
    pub n_t: usize,
    pub n_z: usize,
    pub values: Vec<f64>,
    pub sup_abs: f64,
}

impl ProcessSurface {
    pub fn from_values(n_t: usize, n_z: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_t * n_z);
        let sup_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ProcessSurface {
            n_t,
            n_z,
            values,
            sup_abs,
        }
    }

    pub fn at(&self, ti: usize, zi: usize) -> f64 {
        self.values[ti * self.n_z + zi]
    }
}

/// Per-column selection of subjects by threshold, with the prefix sums
/// (in residual order) that make every column evaluation O(n + |t|).
pub(crate) struct ColumnPrefix {
    /// Among the first k sorted subjects: number selected.
    pub count_sel: Vec<f64>,
    /// Among the first k sorted subjects: selected events.
    pub events_sel: Vec<f64>,
    /// Among the first k sorted subjects: sum of Lambda(R_i) over selected.
    pub lambda_sel: Vec<f64>,
    pub total_sel: f64,
}

impl ColumnPrefix {
    pub fn new(data: &SurvivalDataset, frame: &ResidualFrame, z: &[f64]) -> Self {
        let n = frame.n();
        let pi: Vec<f64> = (0..n).map(|i| indicator_weight(data.z(i), z)).collect();
        let mut count_sel = Vec::with_capacity(n + 1);
        let mut events_sel = Vec::with_capacity(n + 1);
        let mut lambda_sel = Vec::with_capacity(n + 1);
        count_sel.push(0.0);
        events_sel.push(0.0);
        lambda_sel.push(0.0);
        let mut c = 0.0;
        let mut e = 0.0;
        let mut l = 0.0;
        for &i in &frame.order {
            if pi[i] == 1.0 {
                c += 1.0;
                if frame.delta[i] == 1 {
                    e += 1.0;
                }
                // Lambda(R_i) = Delta_i - Mhat_i(inf).
                l += frame.delta[i] as f64 - frame.mhat_inf[i];
            }
            count_sel.push(c);
            events_sel.push(e);
            lambda_sel.push(l);
        }
        ColumnPrefix {
            count_sel,
            events_sel,
            lambda_sel,
            total_sel: c,
        }
    }

    /// Number of sorted subjects with R <= t.
    pub fn rank_of(&self, frame: &ResidualFrame, t: f64) -> usize {
        frame
            .order
            .partition_point(|&i| frame.r[i] <= t)
    }

    /// sum_i pi_i Mhat_i(t), computed from the prefix sums.
    pub fn mhat_sum(&self, frame: &ResidualFrame, t: f64) -> f64 {
        let k = self.rank_of(frame, t);
        let lam_t = frame.lambda_at(t);
        self.events_sel[k] - self.lambda_sel[k] - lam_t * (self.total_sel - self.count_sel[k])
    }
}

/// W(t, z) = n^{-1/2} sum_i pi_i(z) Mhat_i(t) on the full lattice.
pub fn observed_process(
    data: &SurvivalDataset,
    frame: &ResidualFrame,
    grid: &EvalGrid,
) -> ProcessSurface {
    let scale = 1.0 / (frame.n() as f64).sqrt();
    let n_t = grid.t_values.len();
    let n_z = grid.z_points.len();
    let mut values = vec![0.0; n_t * n_z];
    for (zi, z) in grid.z_points.iter().enumerate() {
        let col = ColumnPrefix::new(data, frame, z);
        for (ti, &t) in grid.t_values.iter().enumerate() {
            values[ti * n_z + zi] = scale * col.mhat_sum(frame, t);
        }
    }
    ProcessSurface::from_values(n_t, n_z, values)
}

/// S_pi(t, z) = sum_i pi_i(z) I(R_i >= t) and E_pi = S_pi / S0, as step
/// values on the frame's jump grid.
pub fn pi_risk_averages(
    data: &SurvivalDataset,
    frame: &ResidualFrame,
    z: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let col = ColumnPrefix::new(data, frame, z);
    let mut s_pi = Vec::with_capacity(frame.jump_values.len());
    let mut e_pi = Vec::with_capacity(frame.jump_values.len());
    for (k, &v) in frame.jump_values.iter().enumerate() {
        // Selected subjects with R >= v: total minus those strictly below.
        let below = frame.order.partition_point(|&i| frame.r[i] < v);
        let s = col.total_sel - col.count_sel[below];
        s_pi.push(s);
        e_pi.push(s / frame.s0[k]);
    }
    (s_pi, e_pi)
}

/// The z-dependent coefficient vectors of f_pi and g_pi:
/// f_pi(t, z) = d_pi(z) f0(t) t and g_pi(t, z) = c_pi(z) g0(t) t, with
/// d_pi = n^-1 sum Delta_i pi_i Z_i and
/// c_pi = n^-1 sum pi_i Z_i.
#[derive(Debug, Clone)]
pub struct PiDensityTerms {
    pub d_pi: Vec<f64>,
    pub c_pi: Vec<f64>,
}

impl PiDensityTerms {
    pub fn f_pi(&self, dens: &BaselineDensities, t: f64) -> Vec<f64> {
        let factor = density_time_factor(&dens.f0_hat, t);
        self.d_pi.iter().map(|d| d * factor).collect()
    }

    pub fn g_pi(&self, dens: &BaselineDensities, t: f64) -> Vec<f64> {
        let factor = density_time_factor(&dens.g0_hat, t);
        self.c_pi.iter().map(|c| c * factor).collect()
    }
}

/// f(t) t for a density estimated on the log scale: by change of
/// variables this is the log-scale density at log t, with limit 0 at
/// t = infinity (and at t = 0).
pub fn density_time_factor(kd: &crate::residual::KernelDensity, t: f64) -> f64 {
    if t.is_infinite() || t <= 0.0 {
        0.0
    } else {
        kd.eval(t.ln())
    }
}

pub fn pi_density_terms(data: &SurvivalDataset, z: &[f64]) -> PiDensityTerms {
    let n = data.n();
    let p = data.p();
    let mut d_pi = vec![0.0; p];
    let mut c_pi = vec![0.0; p];
    for i in 0..n {
        if indicator_weight(data.z(i), z) == 0.0 {
            continue;
        }
        let zi = data.z(i);
        for q in 0..p {
            c_pi[q] += zi[q];
            if data.status[i] == 1 {
                d_pi[q] += zi[q];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for q in 0..p {
        d_pi[q] *= inv_n;
        c_pi[q] *= inv_n;
    }
    PiDensityTerms { d_pi, c_pi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::build_frame;
    use rand::Rng;

    fn dataset(seed: u64, n: usize, p: usize) -> SurvivalDataset {
        let mut rng = crate::rng::stream_rng(seed, 1);
        let mut time = Vec::new();
        let mut status = Vec::new();
        let mut cov = Vec::new();
        for _ in 0..n {
            time.push(rng.random_range(0.1..5.0));
            status.push(if rng.random_range(0.0..1.0) < 0.7 { 1 } else { 0 });
            for _ in 0..p {
                cov.push(rng.random_range(-2.0..2.0));
            }
        }
        if !status.contains(&1) {
            status[0] = 1;
        }
        let names = (0..p).map(|q| format!("z{q}")).collect();
        SurvivalDataset::new(time, status, cov, names).unwrap()
    }

    fn brute_w(data: &SurvivalDataset, frame: &ResidualFrame, t: f64, z: &[f64]) -> f64 {
        let n = frame.n();
        (0..n)
            .map(|i| indicator_weight(data.z(i), z) * frame.mhat_at(i, t))
            .sum::<f64>()
            / (n as f64).sqrt()
    }

    #[test]
    fn indicator_examples() {
        let inf = f64::INFINITY;
        assert_eq!(indicator_weight(&[1.0, 5.0], &[2.0, inf]), 1.0);
        assert_eq!(indicator_weight(&[3.0, 5.0], &[2.0, inf]), 0.0);
        assert_eq!(indicator_weight(&[9.0, -4.0], &[inf, inf]), 1.0);
    }

    #[test]
    fn unrestricted_column_is_zero_at_every_t() {
        let d = dataset(2, 40, 2);
        let beta = [0.1, -0.2];
        let f = build_frame(&d, &beta);
        let grid = EvalGrid {
            kind: TestKind::Link,
            t_values: f.jump_values.clone(),
            z_points: vec![vec![f64::INFINITY; 2]],
        };
        let s = observed_process(&d, &f, &grid);
        for v in &s.values {
            assert!(v.abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn componentwise_max_threshold_gives_zero_at_infinity() {
        let d = dataset(3, 30, 2);
        let f = build_frame(&d, &[0.0, 0.0]);
        let zmax: Vec<f64> = (0..2)
            .map(|q| (0..30).map(|i| d.z(i)[q]).fold(f64::MIN, f64::max))
            .collect();
        let grid = EvalGrid {
            kind: TestKind::Link,
            t_values: vec![f64::INFINITY],
            z_points: vec![zmax],
        };
        let s = observed_process(&d, &f, &grid);
        assert!(s.sup_abs < 1e-10);
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        for seed in 0..5 {
            let d = dataset(seed, 25, 2);
            let beta = [0.3, -0.1];
            let f = build_frame(&d, &beta);
            for kind in [TestKind::Omnibus, TestKind::Link, TestKind::Form(1)] {
                let grid = EvalGrid::build(&d, &f, kind, 200);
                let s = observed_process(&d, &f, &grid);
                for (ti, &t) in grid.t_values.iter().enumerate() {
                    for (zi, z) in grid.z_points.iter().enumerate() {
                        let b = brute_w(&d, &f, t, z);
                        assert!((s.at(ti, zi) - b).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn step_function_between_grid_points() {
        let d = dataset(7, 20, 1);
        let f = build_frame(&d, &[0.2]);
        let z = vec![0.5];
        for w in f.jump_values.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            // Between consecutive event residuals the only movement comes
            // from censored subjects passing their own R; check against the
            // brute definition, which is itself piecewise constant there
            // except at censored residuals.
            assert!((brute_w(&d, &f, mid, &z) - brute_w(&d, &f, mid + 1e-9, &z)).abs() < 1e-9);
        }
    }

    #[test]
    fn single_covariate_link_equals_form() {
        let d = dataset(11, 30, 1);
        let f = build_frame(&d, &[0.4]);
        let link = EvalGrid::build(&d, &f, TestKind::Link, usize::MAX);
        let form = EvalGrid::build(&d, &f, TestKind::Form(0), usize::MAX);
        let sl = observed_process(&d, &f, &link);
        let sf = observed_process(&d, &f, &form);
        assert_eq!(sl.values, sf.values);
    }

    #[test]
    fn surfaces_invariant_to_subject_permutation() {
        let d = dataset(13, 20, 2);
        let perm: Vec<usize> = (0..20).rev().collect();
        let mut time = Vec::new();
        let mut status = Vec::new();
        let mut cov = Vec::new();
        for &i in &perm {
            time.push(d.time[i]);
            status.push(d.status[i]);
            cov.extend_from_slice(d.z(i));
        }
        let d2 = SurvivalDataset::new(time, status, cov, d.names.clone()).unwrap();
        let beta = [0.1, 0.6];
        let f1 = build_frame(&d, &beta);
        let f2 = build_frame(&d2, &beta);
        let g1 = EvalGrid::build(&d, &f1, TestKind::Omnibus, 200);
        let g2 = EvalGrid::build(&d2, &f2, TestKind::Omnibus, 200);
        assert_eq!(g1.z_points, g2.z_points);
        let s1 = observed_process(&d, &f1, &g1);
        let s2 = observed_process(&d2, &f2, &g2);
        for (a, b) in s1.values.iter().zip(&s2.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_transform_leaves_form_surface_unchanged() {
        let d = dataset(17, 25, 1);
        let cov2: Vec<f64> = d.covariates.iter().map(|z| z.exp()).collect();
        let d2 = SurvivalDataset::new(d.time.clone(), d.status.clone(), cov2, d.names.clone())
            .unwrap();
        let f1 = build_frame(&d, &[0.0]);
        let f2 = build_frame(&d2, &[0.0]);
        let g1 = EvalGrid::build(&d, &f1, TestKind::Form(0), usize::MAX);
        let g2 = EvalGrid::build(&d2, &f2, TestKind::Form(0), usize::MAX);
        let s1 = observed_process(&d, &f1, &g1);
        let s2 = observed_process(&d2, &f2, &g2);
        assert_eq!(s1.values, s2.values);
    }

    #[test]
    fn risk_averages_examples() {
        let d = dataset(19, 30, 2);
        let f = build_frame(&d, &[0.2, -0.3]);
        let inf = f64::INFINITY;
        let (s_pi, e_pi) = pi_risk_averages(&d, &f, &[inf, inf]);
        for (k, s) in s_pi.iter().enumerate() {
            assert_eq!(*s, f.s0[k]);
            assert_eq!(e_pi[k], 1.0);
        }
        let (s0, e0) = pi_risk_averages(&d, &f, &[-10.0, -10.0]);
        assert!(s0.iter().all(|&s| s == 0.0));
        assert!(e0.iter().all(|&e| e == 0.0));
        // At the smallest residual everyone is at risk: direct count.
        let z = [0.5, 0.5];
        let (s_pi, e_pi) = pi_risk_averages(&d, &f, &z);
        let count = (0..30).filter(|&i| indicator_weight(d.z(i), &z) == 1.0).count() as f64;
        // The first jump value may sit above some censored residuals.
        let below = f
            .order
            .iter()
            .filter(|&&i| f.r[i] < f.jump_values[0] && indicator_weight(d.z(i), &z) == 1.0)
            .count() as f64;
        assert_eq!(s_pi[0], count - below);
        assert!(e_pi.iter().all(|&e| (0.0..=1.0).contains(&e)));
    }

    #[test]
    fn density_terms_examples() {
        let d = dataset(23, 25, 2);
        let f = build_frame(&d, &[0.1, 0.1]);
        let dens = crate::residual::estimate_baseline_densities(&f).unwrap();
        let low = pi_density_terms(&d, &[-10.0, -10.0]);
        assert!(low.f_pi(&dens, 1.0).iter().all(|&v| v == 0.0));
        assert!(low.g_pi(&dens, 1.0).iter().all(|&v| v == 0.0));
        // Ratio f_pi / (f0(t) t) constant in t for fixed z.
        let terms = pi_density_terms(&d, &[0.3, f64::INFINITY]);
        let r1 = terms.f_pi(&dens, 0.7)[0] / density_time_factor(&dens.f0_hat, 0.7);
        let r2 = terms.f_pi(&dens, 2.1)[0] / density_time_factor(&dens.f0_hat, 2.1);
        assert!((r1 - r2).abs() < 1e-10);
        // At t = infinity the factor vanishes.
        assert!(terms.f_pi(&dens, f64::INFINITY).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn omnibus_grid_caps_z_points() {
        let d = dataset(29, 300, 2);
        let f = build_frame(&d, &[0.0, 0.0]);
        let g = EvalGrid::build(&d, &f, TestKind::Omnibus, 200);
        assert!(g.z_points.len() <= 200);
        let full = EvalGrid::build(&d, &f, TestKind::Omnibus, usize::MAX);
        assert_eq!(full.z_points.len(), 300);
    }
}
