//! Iterative least-squares estimation with Kaplan-Meier imputation of
//! censored log failure times.

use crate::data::SurvivalDataset;
use crate::error::Result;
use crate::estimate::{Estimator, FittedModel};
use crate::linalg::{self, norm_inf};

/// Kaplan-Meier estimate of the residual CDF as point masses at the
/// distinct residual values. When the largest residual is censored, its
/// leftover survival mass is redistributed to the largest value so the
/// masses always sum to one.
#[derive(Debug, Clone)]
pub struct KmCdf {
    pub values: Vec<f64>,
    pub mass: Vec<f64>,
}

impl KmCdf {
    /// F(t), right-continuous.
    pub fn cdf(&self, t: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.mass)
            .take_while(|(v, _)| **v <= t)
            .map(|(_, m)| m)
            .sum()
    }

    /// Mean of the distribution restricted to values strictly above `t`,
    /// or `None` when no mass remains there.
    pub fn tail_mean(&self, t: f64) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (v, m) in self.values.iter().zip(&self.mass) {
            if *v > t {
                num += v * m;
                den += m;
            }
        }
        if den > 1e-12 {
            Some(num / den)
        } else {
            None
        }
    }
}

/// Weighted Kaplan-Meier of the CDF of residuals `e` with events `status`;
/// `phi` multiplies both event and risk counts.
pub fn km_cdf_of_residuals(e: &[f64], status: &[u8], phi: &[f64]) -> KmCdf {
    let n = e.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e[a].total_cmp(&e[b]));

    let mut values = Vec::new();
    let mut mass = Vec::new();
    let mut surv = 1.0;
    // Risk set at the current distinct value: everyone not yet passed.
    let mut at_risk: f64 = phi.iter().sum();
    let mut k = 0;
    while k < n {
        let v = e[order[k]];
        let mut events = 0.0;
        let mut leaving = 0.0;
        while k < n && e[order[k]] == v {
            let i = order[k];
            leaving += phi[i];
            if status[i] == 1 {
                events += phi[i];
            }
            k += 1;
        }
        if events > 0.0 && at_risk > 0.0 {
            let next = surv * (1.0 - events / at_risk);
            values.push(v);
            mass.push(surv - next);
            surv = next;
        }
        at_risk -= leaving;
    }
    if surv > 1e-12 {
        // Largest residual censored: redistribute to the largest value.
        let largest = e[*order.last().unwrap()];
        match values.last() {
            Some(&v) if v == largest => *mass.last_mut().unwrap() += surv,
            _ => {
                values.push(largest);
                mass.push(surv);
            }
        }
    }
    KmCdf { values, mass }
}

/// Imputed log failure times: observed events keep log X_i; censored
/// subjects get the KM tail mean of the residual distribution beyond
/// their own residual, minus Z_i' beta.
pub fn conditional_expectation(
    data: &SurvivalDataset,
    beta: &[f64],
    phi: Option<&[f64]>,
) -> Vec<f64> {
    let n = data.n();
    let unit = vec![1.0; n];
    let weights = phi.unwrap_or(&unit);
    let e: Vec<f64> = (0..n).map(|i| data.log_residual(i, beta)).collect();
    let km = km_cdf_of_residuals(&e, &data.status, weights);
    (0..n)
        .map(|i| {
            if data.status[i] == 1 {
                data.time[i].ln()
            } else {
                let imputed = km.tail_mean(e[i]).unwrap_or(e[i]);
                imputed - linalg::dot(data.z(i), beta)
            }
        })
        .collect()
}

pub fn fit_mls(
    data: &SurvivalDataset,
    start: Vec<f64>,
    phi: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<FittedModel> {
    let n = data.n();
    let p = data.p();
    let mut zbar = vec![0.0; p];
    for i in 0..n {
        for q in 0..p {
            zbar[q] += data.z(i)[q];
        }
    }
    for m in zbar.iter_mut() {
        *m /= n as f64;
    }
    // A = sum_i phi_i (Z_i - Zbar) Z_i' is fixed across iterations.
    let mut a = vec![0.0; p * p];
    for i in 0..n {
        let z = data.z(i);
        for r in 0..p {
            for c in 0..p {
                a[r * p + c] += phi[i] * (z[r] - zbar[r]) * z[c];
            }
        }
    }

    let mut beta = start;
    let mut step = f64::INFINITY;
    let mut iterations = 0;
    for m in 1..=max_iter {
        let imputed = conditional_expectation(data, &beta, Some(phi));
        let mut rhs = vec![0.0; p];
        for i in 0..n {
            let z = data.z(i);
            for q in 0..p {
                rhs[q] -= phi[i] * (z[q] - zbar[q]) * imputed[i];
            }
        }
        let next = linalg::solve(a.clone(), rhs)?;
        step = (0..p)
            .map(|q| (next[q] - beta[q]).abs())
            .fold(0.0f64, f64::max);
        beta = next;
        iterations = m;
        if step < tol {
            break;
        }
    }
    Ok(FittedModel {
        estimator: Estimator::Mls,
        beta,
        score_norm_at_solution: norm_inf(&[step]),
        iterations,
        converged: step < tol,
    })
}
