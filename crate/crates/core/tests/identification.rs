use synthblip::estimators::{estimate_si_many, fit_lti, fit_ltv, BlipScope, EstimatorConfig};
use synthblip::oracle::Oracle;
use synthblip::scenario::{random_sequences, Design, Scenario, ScenarioConfig, Variant};
use synthblip::weights::OracleWeights;

fn rel_err(est: f64, truth: f64) -> f64 {
    (est - truth).abs() / truth.abs().max(1.0)
}

#[test]
fn ltv_noiseless_rollout_is_exact() {
    let cfg = ScenarioConfig {
        variant: Variant::Ltv,
        n_actions: 3,
        horizon: 5,
        latent_dim: 2,
        rank: 2,
        design: Design::Rollout { multiplicity: 3, targets: 5 },
        seed: 7,
        ..Default::default()
    };
    let s = Scenario::generate(&cfg).unwrap();
    let weights = OracleWeights::new(s.factors.clone());
    let fit = fit_ltv(&s.panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
    let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
    let mut worst: f64 = 0.0;
    for seq in random_sequences(1, 100, 5, 3) {
        for n in 0..s.panel.n_units() {
            let e = fit.estimate(n, &seq).unwrap();
            worst = worst.max(rel_err(e.value, oracle.counterfactual(n, &seq).unwrap()));
        }
    }
    assert!(worst <= 1e-8, "worst {worst}");
    assert!(fit.check_conservation(&s.panel).unwrap().holds());
}

#[test]
fn lti_noiseless_rollout_is_exact() {
    let cfg = ScenarioConfig {
        variant: Variant::Lti,
        n_actions: 3,
        horizon: 5,
        latent_dim: 2,
        rank: 2,
        design: Design::Rollout { multiplicity: 3, targets: 5 },
        seed: 8,
        ..Default::default()
    };
    let s = Scenario::generate(&cfg).unwrap();
    let weights = OracleWeights::new(s.factors.clone());
    let fit = fit_lti(&s.panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
    let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
    let mut worst: f64 = 0.0;
    for seq in random_sequences(2, 100, 5, 3) {
        for n in 0..s.panel.n_units() {
            let e = fit.estimate(n, &seq).unwrap();
            worst = worst.max(rel_err(e.value, oracle.counterfactual(n, &seq).unwrap()));
        }
    }
    assert!(worst <= 1e-8, "worst {worst}");
    assert!(fit.check_conservation(&s.panel).unwrap().holds());
}

#[test]
fn si_noiseless_is_exact() {
    let seqs = random_sequences(3, 10, 3, 3);
    let mut cfg = ScenarioConfig {
        variant: Variant::General,
        n_actions: 3,
        horizon: 3,
        latent_dim: 3,
        rank: 3,
        design: Design::Sequences { sequences: seqs.clone(), per_sequence: 5, targets: 5 },
        seed: 9,
        ..Default::default()
    };
    cfg.obs_horizon = Some(3);
    let mut s = Scenario::generate(&cfg).unwrap();
    s.ensure_embeddings(&seqs);
    let weights = OracleWeights::new(s.factors.clone());
    let queries: Vec<_> = s.targets().into_iter().flat_map(|n| seqs.iter().map(move |q| (n, q.clone()))).collect();
    let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
    for (r, (n, q)) in estimate_si_many(&s.panel, &weights, &EstimatorConfig::default(), &queries).into_iter().zip(&queries) {
        let e = r.unwrap();
        assert!(rel_err(e.value, oracle.counterfactual(*n, q).unwrap()) <= 1e-8);
    }
}
