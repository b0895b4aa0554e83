//! Analytic-derivative checks and randomized invariants.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use aftgof::estimate::{
    gehan_loss, gehan_score, km_cdf_of_residuals, smoothed_jacobian, smoothed_score,
};
use aftgof::rng::stream_rng;
use aftgof::SurvivalDataset;

fn random_dataset(seed: u64, n: usize, p: usize) -> SurvivalDataset {
    let mut rng = stream_rng(seed, 31415);
    let mut time = Vec::new();
    let mut status = Vec::new();
    let mut cov = Vec::new();
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        time.push((0.4 * e).exp() * 3.0);
        status.push(if rng.random_range(0.0..1.0) < 0.75 { 1 } else { 0 });
        for _ in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            cov.push(z);
        }
    }
    if !status.contains(&1) {
        status[0] = 1;
    }
    let names = (0..p).map(|q| format!("z{q}")).collect();
    SurvivalDataset::new(time, status, cov, names).unwrap()
}

fn random_beta(seed: u64, p: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, 27182);
    (0..p).map(|_| rng.random_range(-0.8..0.8)).collect()
}

/// Central finite differences of the smoothed score must reproduce the
/// analytic Jacobian at 20 random points.
#[test]
fn smoothed_jacobian_matches_finite_differences() {
    let h = 1e-6;
    for trial in 0..20 {
        let p = 1 + (trial % 3);
        let data = random_dataset(trial as u64, 25, p);
        let beta = random_beta(trial as u64, p);
        let phi = vec![1.0; data.n()];
        let jac = smoothed_jacobian(&data, &beta, &phi);
        for q in 0..p {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[q] += h;
            dn[q] -= h;
            let su = smoothed_score(&data, &up);
            let sd = smoothed_score(&data, &dn);
            for a in 0..p {
                let fd = (su[a] - sd[a]) / (2.0 * h);
                assert!(
                    (jac[a * p + q] - fd).abs() < 1e-5,
                    "trial {trial} d S_{a} / d b_{q}: analytic {} vs fd {fd}",
                    jac[a * p + q]
                );
            }
        }
    }
}

/// Away from ties the Gehan loss is differentiable with gradient equal to
/// minus the Gehan score; verify by central differences at 20 random
/// points, skipping any that sit within h of a tie.
#[test]
fn gehan_loss_gradient_is_negative_score() {
    let h = 1e-7;
    let mut checked = 0;
    let mut trial = 0u64;
    while checked < 20 {
        trial += 1;
        assert!(trial < 500, "could not find 20 tie-free points");
        let p = 1 + (trial as usize % 2);
        let data = random_dataset(trial, 20, p);
        let beta = random_beta(trial + 100, p);
        // Skip degenerate points: any residual pair closer than a safe
        // margin could flip an indicator inside the difference stencil.
        let e: Vec<f64> = (0..data.n()).map(|i| data.log_residual(i, &beta)).collect();
        let mut sorted = e.clone();
        sorted.sort_by(f64::total_cmp);
        let min_gap = sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if min_gap < 1e-4 {
            continue;
        }
        let score = gehan_score(&data, &beta);
        for q in 0..p {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[q] += h;
            dn[q] -= h;
            let fd = (gehan_loss(&data, &up) - gehan_loss(&data, &dn)) / (2.0 * h);
            assert!(
                (fd + score[q]).abs() < 1e-5,
                "trial {trial} q {q}: grad {fd} vs -score {}",
                -score[q]
            );
        }
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Multiplying every time by a positive constant shifts all residuals
    /// equally, so the Gehan score and the smoothed score are unchanged.
    #[test]
    fn scores_invariant_to_time_rescaling(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let data = random_dataset(seed, 15, 2);
        let beta = random_beta(seed, 2);
        let scaled = SurvivalDataset::new(
            data.time.iter().map(|t| t * scale).collect(),
            data.status.clone(),
            data.covariates.clone(),
            data.names.clone(),
        ).unwrap();
        let (a, b) = (gehan_score(&data, &beta), gehan_score(&scaled, &beta));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (a, b) = (smoothed_score(&data, &beta), smoothed_score(&scaled, &beta));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    /// The Gehan loss is convex: midpoint value never exceeds the chord.
    #[test]
    fn gehan_loss_is_convex_on_segments(seed in 0u64..1000, lam in 0.0f64..1.0) {
        let data = random_dataset(seed, 12, 2);
        let b1 = random_beta(seed, 2);
        let b2 = random_beta(seed + 1, 2);
        let mix: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let lhs = gehan_loss(&data, &mix);
        let rhs = lam * gehan_loss(&data, &b1) + (1.0 - lam) * gehan_loss(&data, &b2);
        prop_assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
    }

    /// The loss is nonnegative and zero only when no event has a larger
    /// residual anywhere (trivially true at extreme beta is not required,
    /// just the sign).
    #[test]
    fn gehan_loss_nonnegative(seed in 0u64..1000) {
        let data = random_dataset(seed, 12, 1);
        let beta = random_beta(seed + 7, 1);
        prop_assert!(gehan_loss(&data, &beta) >= 0.0);
    }

    /// Kaplan-Meier output is a genuine probability mass function on the
    /// residual values: nonnegative masses summing to one, nondecreasing
    /// right-continuous CDF.
    #[test]
    fn kaplan_meier_is_a_distribution(seed in 0u64..1000) {
        let data = random_dataset(seed, 14, 1);
        let beta = random_beta(seed + 9, 1);
        let e: Vec<f64> = (0..data.n()).map(|i| data.log_residual(i, &beta)).collect();
        let km = km_cdf_of_residuals(&e, &data.status, &vec![1.0; data.n()]);
        prop_assert!(km.mass.iter().all(|&m| m >= -1e-12));
        let total: f64 = km.mass.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "mass sums to {total}");
        let mut prev = f64::NEG_INFINITY;
        let mut prev_cdf = 0.0;
        for &v in &km.values {
            prop_assert!(v > prev);
            let c = km.cdf(v);
            prop_assert!(c >= prev_cdf - 1e-12);
            prev = v;
            prev_cdf = c;
        }
        prop_assert!((km.cdf(f64::INFINITY) - 1.0).abs() < 1e-10);
    }

    /// Permuting subject order leaves both scores unchanged.
    #[test]
    fn scores_invariant_to_subject_permutation(seed in 0u64..1000) {
        let data = random_dataset(seed, 13, 2);
        let beta = random_beta(seed + 3, 2);
        let n = data.n();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(seed, 999);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut cov = Vec::new();
        for &i in &perm {
            cov.extend_from_slice(data.z(i));
        }
        let shuffled = SurvivalDataset::new(
            perm.iter().map(|&i| data.time[i]).collect(),
            perm.iter().map(|&i| data.status[i]).collect(),
            cov,
            data.names.clone(),
        ).unwrap();
        let (a, b) = (gehan_score(&data, &beta), gehan_score(&shuffled, &beta));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
