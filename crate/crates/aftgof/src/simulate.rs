//! Scenario generators, censoring-rate calibration, and a Monte Carlo
//! harness tabulating rejection fractions per (gamma, test, estimator,
//! standardization) cell.

use serde::{Deserialize, Serialize};

use rand_distr::{Distribution, StandardNormal};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::estimate::{normal_cdf, Estimator};
use crate::gof::{GofSession, TestKind, DEFAULT_GRID_CAP};
use crate::rng::{derive_seed, stream_rng};

/// S1: one normal covariate, optionally entering quadratically.
/// S2: adds a Bernoulli(1/2) covariate to S1's structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s1" | "S1" => Ok(Scenario::S1),
            "s2" | "S2" => Ok(Scenario::S2),
            other => Err(Error::Validation(format!(
                "unknown scenario {other:?} (expected s1 or s2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    /// Coefficient on the squared continuous covariate; 0 is the null.
    pub gamma: f64,
    pub target_censoring: f64,
    /// Location of the log-normal censoring time; `f64::INFINITY` means
    /// no censoring.
    pub tau: f64,
    pub seed: u64,
}

/// log T for one subject given its covariates.
fn log_failure_time(scenario: Scenario, gamma: f64, z: &[f64], eps: f64) -> f64 {
    match scenario {
        Scenario::S1 => 4.0 - z[0] - gamma * z[0] * z[0] + eps,
        Scenario::S2 => 4.0 - z[0] - z[1] - gamma * z[1] * z[1] + eps,
    }
}

fn draw_covariates<R: rand::Rng>(scenario: Scenario, rng: &mut R) -> Vec<f64> {
    let normal: f64 = {
        let e: f64 = StandardNormal.sample(rng);
        2.0 + e
    };
    match scenario {
        Scenario::S1 => vec![normal],
        Scenario::S2 => {
            let b = if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { 0.0 };
            vec![b, normal]
        }
    }
}

pub fn generate(config: &ScenarioConfig) -> SurvivalDataset {
    let mut rng = stream_rng(config.seed, 0xDA7A);
    let p = match config.scenario {
        Scenario::S1 => 1,
        Scenario::S2 => 2,
    };
    let mut time = Vec::with_capacity(config.n);
    let mut status = Vec::with_capacity(config.n);
    let mut cov = Vec::with_capacity(config.n * p);
    for _ in 0..config.n {
        let z = draw_covariates(config.scenario, &mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let logt = log_failure_time(config.scenario, config.gamma, &z, eps);
        let (x, d) = if config.tau.is_infinite() {
            (logt, 1u8)
        } else {
            let ec: f64 = StandardNormal.sample(&mut rng);
            let logc = config.tau + ec;
            if logt <= logc {
                (logt, 1)
            } else {
                (logc, 0)
            }
        };
        time.push(x.exp());
        status.push(d);
        cov.extend_from_slice(&z);
    }
    if !status.contains(&1) {
        status[0] = 1;
    }
    let names = match config.scenario {
        Scenario::S1 => vec!["z".to_string()],
        Scenario::S2 => vec!["z1".to_string(), "z2".to_string()],
    };
    SurvivalDataset::new(time, status, cov, names).expect("generated data is valid")
}

const CALIBRATION_DRAWS: usize = 100_000;
const CALIBRATION_TOL: f64 = 0.005;

/// Bisect the censoring location tau so the expected censoring fraction
/// hits the target. With log C ~ N(tau, 1) independent of T, the fraction
/// is E Phi(log T - tau), estimated on a fixed bank of failure times.
pub fn calibrate_tau(scenario: Scenario, gamma: f64, target_censoring: f64) -> Result<f64> {
    if target_censoring <= 0.0 {
        return Ok(f64::INFINITY);
    }
    if target_censoring >= 1.0 {
        return Err(Error::Validation(format!(
            "target censoring must be below 1, got {target_censoring}"
        )));
    }
    let mut rng = stream_rng(0x7A0, 0);
    let logt: Vec<f64> = (0..CALIBRATION_DRAWS)
        .map(|_| {
            let z = draw_covariates(scenario, &mut rng);
            let eps: f64 = StandardNormal.sample(&mut rng);
            log_failure_time(scenario, gamma, &z, eps)
        })
        .collect();
    let fraction = |tau: f64| -> f64 {
        logt.iter().map(|&t| normal_cdf(t - tau)).sum::<f64>() / logt.len() as f64
    };
    let mut lo = logt.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0;
    let mut hi = logt.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0;
    // fraction is decreasing in tau: fraction(lo) ~ 1, fraction(hi) ~ 0.
    if fraction(lo) < target_censoring || fraction(hi) > target_censoring {
        return Err(Error::Numerical("censoring calibration bracket failed".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = fraction(mid);
        if (f - target_censoring).abs() < CALIBRATION_TOL {
            return Ok(mid);
        }
        if f > target_censoring {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical("censoring calibration did not converge".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub scenario: Scenario,
    pub gammas: Vec<f64>,
    pub ns: Vec<usize>,
    pub censorings: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub reps: usize,
    pub paths: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl HarnessConfig {
    /// CI-runnable defaults; full-scale studies override reps and paths.
    pub fn desk_scale(scenario: Scenario, seed: u64) -> Self {
        HarnessConfig {
            scenario,
            gammas: vec![0.0, 0.3],
            ns: vec![100, 300],
            censorings: vec![0.2],
            estimators: vec![Estimator::Mns, Estimator::Mis],
            reps: 200,
            paths: 200,
            seed,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnessCell {
    pub gamma: f64,
    pub n: usize,
    pub censoring: f64,
    pub estimator: Estimator,
    pub test: TestKind,
    pub standardized: bool,
    pub rejections: usize,
    pub reps_done: usize,
    pub failures: usize,
    pub rejection_fraction: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnessResult {
    pub config: HarnessConfig,
    pub cells: Vec<HarnessCell>,
}

impl HarnessResult {
    pub fn cell(
        &self,
        gamma: f64,
        n: usize,
        censoring: f64,
        estimator: Estimator,
        test: TestKind,
        standardized: bool,
    ) -> Option<&HarnessCell> {
        self.cells.iter().find(|c| {
            c.gamma == gamma
                && c.n == n
                && c.censoring == censoring
                && c.estimator == estimator
                && c.test == test
                && c.standardized == standardized
        })
    }

    /// Table-style CSV: one row per (gamma, test, standardized), one
    /// column per (estimator, n, censoring).
    pub fn to_csv(&self) -> String {
        let mut col_keys: Vec<(Estimator, usize, f64)> = Vec::new();
        for c in &self.cells {
            let key = (c.estimator, c.n, c.censoring);
            if !col_keys.contains(&key) {
                col_keys.push(key);
            }
        }
        let mut row_keys: Vec<(f64, TestKind, bool)> = Vec::new();
        for c in &self.cells {
            let key = (c.gamma, c.test, c.standardized);
            if !row_keys.contains(&key) {
                row_keys.push(key);
            }
        }
        let mut out = String::from("gamma,test,standardized");
        for (e, n, cens) in &col_keys {
            out.push_str(&format!(",{e}_n{n}_c{cens}"));
        }
        out.push('\n');
        for (gamma, test, std) in &row_keys {
            out.push_str(&format!("{gamma},{test},{std}"));
            for (e, n, cens) in &col_keys {
                match self.cell(*gamma, *n, *cens, *e, *test, *std) {
                    Some(c) => out.push_str(&format!(",{:.4}", c.rejection_fraction)),
                    None => out.push_str(","),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// The tests tabulated per replicate: omnibus, link, and the functional
/// form of the continuous covariate (the one entering quadratically
/// under the alternative).
fn harness_tests(scenario: Scenario) -> Vec<TestKind> {
    let form_col = match scenario {
        Scenario::S1 => 0,
        Scenario::S2 => 1,
    };
    vec![TestKind::Omnibus, TestKind::Link, TestKind::Form(form_col)]
}

pub fn run_harness(config: &HarnessConfig) -> Result<HarnessResult> {
    let mut cells = Vec::new();
    let tests = harness_tests(config.scenario);
    for &gamma in &config.gammas {
        for &censoring in &config.censorings {
            let tau = calibrate_tau(config.scenario, gamma, censoring)?;
            for &n in &config.ns {
                // (estimator, test, standardized) -> (rejections, done)
                let mut tally = std::collections::BTreeMap::new();
                let mut failures = 0usize;
                for rep in 0..config.reps {
                    let data_seed = derive_seed(config.seed, (rep as u64) << 1);
                    let path_seed = derive_seed(config.seed, ((rep as u64) << 1) | 1);
                    let data = generate(&ScenarioConfig {
                        scenario: config.scenario,
                        n,
                        gamma,
                        target_censoring: censoring,
                        tau,
                        seed: data_seed,
                    });
                    for &estimator in &config.estimators {
                        let session = match GofSession::new(&data, estimator, DEFAULT_GRID_CAP) {
                            Ok(s) => s,
                            Err(_) => {
                                failures += 1;
                                continue;
                            }
                        };
                        match session.run_tests(&tests, config.paths, path_seed) {
                            Ok(pairs) => {
                                for (test, (unstd, std)) in tests.iter().zip(pairs) {
                                    for r in [unstd, std] {
                                        let e = tally
                                            .entry((estimator, format!("{test}"), r.standardized))
                                            .or_insert((0usize, 0usize));
                                        if r.p_value < config.alpha {
                                            e.0 += 1;
                                        }
                                        e.1 += 1;
                                    }
                                }
                            }
                            Err(_) => failures += tests.len(),
                        }
                    }
                }
                for &estimator in &config.estimators {
                    for &test in &tests {
                        for standardized in [false, true] {
                            let (rej, done) = *tally
                                .get(&(estimator, format!("{test}"), standardized))
                                .unwrap_or(&(0, 0));
                            if done == 0 {
                                return Err(Error::Numerical(format!(
                                    "no successful replicates for gamma={gamma} n={n} {estimator} {test}"
                                )));
                            }
                            let frac = rej as f64 / done as f64;
                            cells.push(HarnessCell {
                                gamma,
                                n,
                                censoring,
                                estimator,
                                test,
                                standardized,
                                rejections: rej,
                                reps_done: done,
                                failures,
                                rejection_fraction: frac,
                                mc_se: (frac * (1.0 - frac) / done as f64).sqrt(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(HarnessResult {
        config: config.clone(),
        cells,
    })
}
