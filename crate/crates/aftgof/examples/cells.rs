use aftgof::estimate::Estimator;
use aftgof::process::TestKind;
use aftgof::*;

// Probe: null size and power of the production pipeline.
fn main() {
    let reps = 100;
    for gamma in [0.0f64, 0.3] {
        let tau = calibrate_tau(Scenario::S1, gamma, 0.2).unwrap();
        let mut rej = [[0usize; 2]; 3];
        for rep in 0..reps {
            let data = generate(&ScenarioConfig {
                scenario: Scenario::S1,
                n: 300,
                gamma,
                target_censoring: 0.2,
                tau,
                seed: 95000 + rep as u64,
            });
            let session = GofSession::new(&data, Estimator::Mis, 200).unwrap();
            let reports = session
                .run_tests(
                    &[TestKind::Omnibus, TestKind::Link, TestKind::Form(0)],
                    150,
                    7000 + rep as u64,
                )
                .unwrap();
            for (ti, (unstd, std)) in reports.iter().enumerate() {
                if unstd.p_value < 0.05 {
                    rej[ti][0] += 1;
                }
                if std.p_value < 0.05 {
                    rej[ti][1] += 1;
                }
            }
        }
        for (ti, name) in ["omni", "link", "form"].iter().enumerate() {
            println!(
                "gamma={gamma} {name}: raw {:.3} std {:.3}",
                rej[ti][0] as f64 / reps as f64,
                rej[ti][1] as f64 / reps as f64
            );
        }
    }
}
