// Every observed outcome equals the factor representation at the unit's own
// actions plus the realized noise, for both LTV and LTI systems.

use synthblip::dgp::noise_decomposition;
use synthblip::oracle::Oracle;
use synthblip::scenario::{Scenario, ScenarioConfig, Variant};

fn main() {
    run_example();
}

pub fn run_example() {
    for variant in [Variant::Ltv, Variant::Lti] {
        let s = Scenario::generate(&ScenarioConfig {
            variant,
            horizon: 4,
            state_noise: 0.3,
            outcome_noise: 0.3,
            seed: 1,
            ..Default::default()
        })
        .expect("scenario");
        let (params, noise) = (s.params.as_ref().unwrap(), s.noise.as_ref().unwrap());
        let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
        let mut worst: f64 = 0.0;
        for n in 0..s.panel.n_units() {
            for t in 1..=s.panel.obs_horizon() {
                let seq = s.panel.observed_sequence(n, t).unwrap();
                let mean = oracle.counterfactual(n, &seq).unwrap();
                let eps: f64 = noise_decomposition(params, noise, n, t).unwrap().iter().sum();
                worst = worst.max((s.panel.outcome(n, t) - mean - eps).abs());
            }
        }
        println!(
            "{:>3}: {} units x {} periods, max |Y - (mean + noise)| = {worst:.2e}",
            variant.name(),
            s.panel.n_units(),
            s.panel.obs_horizon()
        );
        assert!(worst < 1e-10);
    }
}
