//! Derivative-free simplex minimizer for the piecewise-linear Gehan loss.

pub struct NmOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const ALPHA: f64 = 1.0; // reflection
const GAMMA: f64 = 2.0; // expansion
const RHO: f64 = 0.5; // contraction
const SIGMA: f64 = 0.5; // shrink
const INITIAL_STEP: f64 = 0.05;

pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], diameter_tol: f64) -> NmOutcome {
    let p = start.len();
    let max_iter = 800 * p.max(1);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
    simplex.push(start.to_vec());
    for q in 0..p {
        let mut v = start.to_vec();
        v[q] += INITIAL_STEP * v[q].abs().max(1.0);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for iter in 0..max_iter {
        let mut order: Vec<usize> = (0..=p).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[p];
        let second_worst = order[p.saturating_sub(1)];

        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if diameter < diameter_tol {
            return NmOutcome {
                x: simplex[best].clone(),
                iterations: iter,
                converged: true,
            };
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; p];
        for (k, v) in simplex.iter().enumerate() {
            if k == worst {
                continue;
            }
            for q in 0..p {
                centroid[q] += v[q];
            }
        }
        for c in centroid.iter_mut() {
            *c /= p as f64;
        }

        let reflect: Vec<f64> = (0..p)
            .map(|q| centroid[q] + ALPHA * (centroid[q] - simplex[worst][q]))
            .collect();
        let fr = f(&reflect);
        if fr < values[best] {
            let expand: Vec<f64> = (0..p)
                .map(|q| centroid[q] + GAMMA * (reflect[q] - centroid[q]))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[worst] = expand;
                values[worst] = fe;
            } else {
                simplex[worst] = reflect;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = fr;
            continue;
        }
        let contract: Vec<f64> = if fr < values[worst] {
            (0..p)
                .map(|q| centroid[q] + RHO * (reflect[q] - centroid[q]))
                .collect()
        } else {
            (0..p)
                .map(|q| centroid[q] + RHO * (simplex[worst][q] - centroid[q]))
                .collect()
        };
        let fc = f(&contract);
        if fc < values[worst].min(fr) {
            simplex[worst] = contract;
            values[worst] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for k in 0..=p {
            if k == best {
                continue;
            }
            for q in 0..p {
                simplex[k][q] = simplex[best][q] + SIGMA * (simplex[k][q] - simplex[best][q]);
            }
            values[k] = f(&simplex[k]);
        }
    }

    let best = (0..=p).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NmOutcome {
        x: simplex[best].clone(),
        iterations: max_iter,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let out = minimize(&f, &[0.0, 0.0], 1e-9);
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-6);
        assert!((out.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn minimizes_piecewise_linear() {
        let f = |x: &[f64]| (x[0] - 0.7).abs() + 0.5 * (x[0] - 0.7).abs().powi(1);
        let out = minimize(&f, &[5.0], 1e-9);
        assert!((out.x[0] - 0.7).abs() < 1e-6);
    }
}
