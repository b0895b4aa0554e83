//! Newton iteration on the smoothed score with step-halving on the score
//! norm; falls back to a gradient step when the Jacobian is singular.

use crate::data::SurvivalDataset;
use crate::error::Result;
use crate::linalg::{self, norm2};

use super::smooth::{smoothed_jacobian, smoothed_score_weighted};

pub struct NewtonOutcome {
    pub beta: Vec<f64>,
    pub score_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;

pub fn solve_smoothed(
    data: &SurvivalDataset,
    start: Vec<f64>,
    phi: &[f64],
    tol: f64,
) -> Result<NewtonOutcome> {
    let p = start.len();
    let mut beta = start;
    let mut score = smoothed_score_weighted(data, &beta, phi);
    let mut snorm = norm2(&score);
    for iter in 0..MAX_ITER {
        if snorm < tol {
            return Ok(NewtonOutcome {
                beta,
                score_norm: snorm,
                iterations: iter,
                converged: true,
            });
        }
        let jac = smoothed_jacobian(data, &beta, phi);
        // Newton direction d solves J d = -S.
        let direction = match linalg::solve(jac, score.iter().map(|s| -s).collect()) {
            Ok(d) => d,
            // Singular Jacobian: the score is minus the gradient of the
            // smoothed convex loss, so +S is a descent direction.
            Err(_) => score.clone(),
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = (0..p).map(|q| beta[q] + step * direction[q]).collect();
            let trial_score = smoothed_score_weighted(data, &trial, phi);
            let trial_norm = norm2(&trial_score);
            if trial_norm < snorm {
                beta = trial;
                score = trial_score;
                snorm = trial_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(NewtonOutcome {
                beta,
                score_norm: snorm,
                iterations: iter + 1,
                converged: snorm < tol,
            });
        }
    }
    let converged = snorm < tol;
    Ok(NewtonOutcome {
        beta,
        score_norm: snorm,
        iterations: MAX_ITER,
        converged,
    })
}
