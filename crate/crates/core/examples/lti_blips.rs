// LTI blips depend only on the lag since the action. Donors observed over
// `2T - 1` periods give every lag up to `T - 1`; a shorter window is a
// horizon deficit.

use synthblip::estimators::{fit_lti, BlipScope, EstimateError, EstimatorConfig};
use synthblip::oracle::Oracle;
use synthblip::panel::ActionId;
use synthblip::scenario::{Design, Scenario, ScenarioConfig, Variant};
use synthblip::weights::OracleWeights;

fn main() {
    run_example();
}

pub fn run_example() {
    let cfg = ScenarioConfig {
        variant: Variant::Lti,
        horizon: 3,
        design: Design::Rollout { multiplicity: 2, targets: 2 },
        seed: 4,
        ..Default::default()
    };
    let s = Scenario::generate(&cfg).expect("scenario");
    let weights = OracleWeights::new(s.factors.clone());
    let fit = fit_lti(&s.panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).expect("fit");
    let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
    for n in s.targets() {
        for lag in 0..3 {
            let est = fit.blips.value(n, lag, ActionId(1)).unwrap();
            let truth = oracle.lag_blip(n, lag, ActionId(1)).unwrap();
            println!("unit {n}, lag {lag}: blip {est:+.6} (truth {truth:+.6})");
            assert!((est - truth).abs() < 1e-8);
        }
    }

    let short = s.panel.truncated(4);
    match fit_lti(&short, &weights, &EstimatorConfig::default(), &BlipScope::Full) {
        Err(e @ EstimateError::HorizonDeficit { .. }) => println!("T_obs = 4: {e}"),
        other => panic!("expected a horizon deficit, got {other:?}"),
    }
}
