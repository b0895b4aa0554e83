//! Gehan rank score and its convex potential.

use crate::data::SurvivalDataset;

/// S_n(b) = n^-1 sum_i sum_j Delta_i (Z_i - Z_j) I(e_j >= e_i).
/// Ties count through the `>=` convention, including the i = j terms
/// (which contribute nothing since Z_i - Z_i = 0).
pub fn gehan_score(data: &SurvivalDataset, beta: &[f64]) -> Vec<f64> {
    gehan_score_weighted(data, beta, &vec![1.0; data.n()])
}

/// Perturbed score: each (i, j) pair carries phi_i phi_j, reweighting
/// the event and the comparator side alike.
pub fn gehan_score_weighted(data: &SurvivalDataset, beta: &[f64], phi: &[f64]) -> Vec<f64> {
    let n = data.n();
    let p = data.p();
    let e: Vec<f64> = (0..n).map(|i| data.log_residual(i, beta)).collect();
    let mut score = vec![0.0; p];
    for i in 0..n {
        if data.status[i] == 0 {
            continue;
        }
        let zi = data.z(i);
        for j in 0..n {
            if e[j] >= e[i] {
                let w = phi[i] * phi[j];
                let zj = data.z(j);
                for q in 0..p {
                    score[q] += w * (zi[q] - zj[q]);
                }
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for s in score.iter_mut() {
        *s *= inv_n;
    }
    score
}

/// G(b) = n^-1 sum_i sum_j Delta_i max(e_j - e_i, 0): convex, piecewise
/// linear, with -gradient equal to the Gehan score away from ties.
pub fn gehan_loss(data: &SurvivalDataset, beta: &[f64]) -> f64 {
    gehan_loss_weighted(data, beta, &vec![1.0; data.n()])
}

pub fn gehan_loss_weighted(data: &SurvivalDataset, beta: &[f64], phi: &[f64]) -> f64 {
    let n = data.n();
    let e: Vec<f64> = (0..n).map(|i| data.log_residual(i, beta)).collect();
    let mut loss = 0.0;
    for i in 0..n {
        if data.status[i] == 0 {
            continue;
        }
        let mut acc = 0.0;
        for (j, &ej) in e.iter().enumerate() {
            let d = ej - e[i];
            if d > 0.0 {
                acc += phi[j] * d;
            }
        }
        loss += phi[i] * acc;
    }
    loss / n as f64
}
