use std::sync::Arc;
use synthblip::dgp::{simulate, LtiSystemParams, LtvSystemParams, PolicySpec, SimulationSpec, SystemParams, UnitPolicy};
use synthblip::donors::{DonorKind, DonorSet};
use synthblip::estimators::{
    estimate_si, fit_lti, fit_ltv, BlipScope, EntrySource, EstimateError, EstimatorConfig, TermSource,
};
use synthblip::factors::LatentFactors;
use synthblip::oracle::Oracle;
use synthblip::panel::{ActionId, ActionSequence, ControlSchedule, Panel};
use synthblip::scenario::{random_sequences, Design, Scenario, ScenarioConfig, Variant};
use synthblip::weights::{OracleWeights, WeightVector, WeightsError, WeightsProvider};

/// Equal weights over the donor set.
struct Uniform;

impl WeightsProvider for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn fit(&self, _: &Panel, donors: &DonorSet, targets: &[usize]) -> Result<Vec<WeightVector>, WeightsError> {
        let m = donors.len();
        Ok(targets
            .iter()
            .map(|&n| WeightVector {
                target: n,
                beta: vec![1.0 / m as f64; m],
                rank: m,
                singular_values: Arc::from(vec![]),
                residual: 0.0,
            })
            .collect())
    }
}

fn seq(s: &str) -> ActionSequence {
    s.parse().unwrap()
}

fn committed(rows: &[&str]) -> PolicySpec {
    PolicySpec {
        units: rows.iter().map(|r| UnitPolicy::committed(seq(r).into_inner())).collect(),
    }
}

/// `d = 1`, `B = 0.5`, `C = θ = 1`, `θ̃ = 0`, `w_0 = 0`, `w_1 = 1`:
/// lag-`k` factor `0.5^k`.
fn scalar_lti(rows: &[&str], horizon: usize) -> (Panel, LatentFactors) {
    let n = rows.len();
    let obs = seq(rows[0]).len();
    let params = SystemParams::Lti(LtiSystemParams {
        latent_dim: 1,
        transition: vec![vec![0.5]; n],
        input: vec![vec![1.0]; n],
        outcome_loading: vec![vec![1.0]; n],
        direct_loading: vec![vec![0.0]; n],
        action_embedding: vec![vec![0.0], vec![1.0]],
        state_noise: 0.0,
        outcome_noise: 0.0,
    });
    let sim = simulate(&SimulationSpec {
        params,
        policies: committed(rows),
        control: ControlSchedule::TimeInvariant(ActionId(0)),
        horizon,
        obs_horizon: obs,
        seed: 0,
    })
    .unwrap();
    (sim.panel, sim.factors)
}

fn scalar_ltv(rows: &[&str]) -> (Panel, LatentFactors) {
    let n = rows.len();
    let obs = seq(rows[0]).len();
    let per = |v: f64| vec![vec![vec![v]; obs]; n];
    let params = SystemParams::Ltv(LtvSystemParams {
        latent_dim: 1,
        transition: per(0.5),
        input: per(1.0),
        outcome_loading: per(1.0),
        direct_loading: per(0.0),
        action_embedding: vec![vec![0.0], vec![1.0]],
        state_noise: 0.0,
        outcome_noise: 0.0,
    });
    let sim = simulate(&SimulationSpec {
        params,
        policies: committed(rows),
        control: ControlSchedule::TimeInvariant(ActionId(0)),
        horizon: obs,
        obs_horizon: obs,
        seed: 0,
    })
    .unwrap();
    (sim.panel, sim.factors)
}

#[test]
fn si_single_self_donor_returns_own_outcome() {
    let (panel, _) = scalar_ltv(&["0-0", "0-1", "1-0"]);
    let e = estimate_si(&panel, &Uniform, &EstimatorConfig::default(), 1, &seq("0-1")).unwrap();
    assert_eq!(e.value, panel.outcome(1, 2));
    assert_eq!(e.terms.len(), 1);
}

#[test]
fn si_without_donors_is_a_deficit() {
    let (panel, _) = scalar_ltv(&["0-0", "0-1", "1-0"]);
    let err = estimate_si(&panel, &Uniform, &EstimatorConfig::default(), 0, &seq("1-1")).unwrap_err();
    assert!(matches!(err, EstimateError::DonorDeficit { kind: DonorKind::Si { .. }, found: 0, .. }));
}

#[test]
fn ltv_scalar_blips_and_baselines() {
    let (panel, factors) = scalar_ltv(&["0-0", "0-1", "1-0", "1-1"]);
    let weights = OracleWeights::new(factors);
    let fit = fit_ltv(&panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
    // Unit 1 deviates at T with ψ^{T,T} = 1 and w_1 − w_0 = 1.
    assert_eq!(fit.blips.value(1, 2, ActionId(1)), Some(1.0));
    // Observed control at T.
    assert_eq!(fit.baselines.value(0, 2), Some(panel.outcome(0, 2)));
    for n in 0..4 {
        for t in 1..=2 {
            assert_eq!(fit.blips.value(n, t, ActionId(0)), Some(0.0));
        }
        let all_control = fit.estimate(n, &seq("0-0")).unwrap();
        assert_eq!(Some(all_control.value), fit.baselines.value(n, 2));
        let e = fit.estimate(n, &seq("1-0")).unwrap();
        assert!(e.is_consistent());
        assert!((e.value - 0.5).abs() <= 1e-12, "{}", e.value);
    }
}

#[test]
fn lti_scalar_hand_recursion() {
    let (panel, factors) = scalar_lti(&["0-0-0-0-0", "1-0-0-0-0", "0-1-0-0-0", "0-0-1-0-0"], 3);
    let weights = OracleWeights::new(factors);
    let fit = fit_lti(&panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
    let level0 = fit.blips.level(0, ActionId(1)).unwrap();
    assert_eq!(level0.entry(1).unwrap().source, EntrySource::Observed);
    assert_eq!(fit.blips.value(1, 0, ActionId(1)), Some(1.0));
    assert_eq!(fit.blips.value(1, 1, ActionId(1)), Some(0.5));
    assert_eq!(fit.blips.value(0, 2, ActionId(0)), Some(0.0));
    let e = fit.estimate(0, &seq("1-0-0")).unwrap();
    assert!((e.value - 0.25).abs() <= 1e-12, "{}", e.value);
    assert!(e.is_consistent());
    assert!(matches!(e.terms[2].source, TermSource::PinnedControl));
    let base = fit.estimate(0, &seq("0-0-0")).unwrap();
    assert_eq!(Some(base.value), fit.baselines.value(0, 3));
}

#[test]
fn lti_short_observation_window_is_a_horizon_deficit() {
    let (panel, factors) = scalar_lti(&["0-0-0-0", "1-0-0-0", "0-1-0-0", "0-0-1-0"], 3);
    let weights = OracleWeights::new(factors);
    let err = fit_lti(&panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap_err();
    assert!(
        matches!(err, EstimateError::HorizonDeficit { unit: 3, time: 5, obs_horizon: 4 }),
        "{err:?}"
    );
}

#[test]
fn lti_rejects_time_varying_control() {
    let (panel, factors) = scalar_ltv(&["0-1", "1-1"]);
    let mut parts = panel.parts().clone();
    parts.control = ControlSchedule::TimeVarying(vec![ActionId(0), ActionId(1)]);
    let panel = Panel::new(parts).unwrap();
    let err = fit_lti(&panel, &OracleWeights::new(factors), &EstimatorConfig::default(), &BlipScope::Full);
    assert_eq!(err.unwrap_err(), EstimateError::TimeVaryingControl);
}

fn noisy(variant: Variant, seed: u64) -> Scenario {
    Scenario::generate(&ScenarioConfig {
        variant,
        n_actions: 3,
        horizon: 4,
        state_noise: 0.7,
        outcome_noise: 0.7,
        design: Design::Rollout { multiplicity: 3, targets: 3 },
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn ltv_donor_self_consistency_is_exact() {
    let s = noisy(Variant::Ltv, 3);
    let weights = OracleWeights::new(s.factors.clone());
    let fit = fit_ltv(&s.panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
    let horizon = 4;
    let base = fit.baselines.level(horizon).unwrap();
    for &j in &base.donors {
        assert_eq!(fit.baselines.value(j, horizon), Some(s.panel.outcome(j, horizon)));
    }
    for a in 1..3 {
        let level = fit.blips.level(horizon, ActionId(a)).unwrap();
        for &j in &level.donors {
            let g = fit.blips.value(j, horizon, ActionId(a)).unwrap();
            let b = fit.baselines.value(j, horizon).unwrap();
            assert_eq!(g + b, s.panel.outcome(j, horizon));
        }
    }
    assert!(fit.check_conservation(&s.panel).unwrap().holds());
}

#[test]
fn lti_conservation_holds_on_noisy_panels() {
    for seed in 0..4 {
        let s = noisy(Variant::Lti, seed);
        let weights = OracleWeights::new(s.factors.clone());
        let fit = fit_lti(&s.panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
        let report = fit.check_conservation(&s.panel).unwrap();
        assert!(report.checked > 0 && report.holds(), "{:?}", report.violations.first());
    }
}

#[test]
fn scoped_fit_matches_full_fit_on_queried_sequences() {
    let s = noisy(Variant::Ltv, 11);
    let weights = OracleWeights::new(s.factors.clone());
    let cfg = EstimatorConfig::default();
    let queries = random_sequences(5, 6, 4, 3);
    let full = fit_ltv(&s.panel, &weights, &cfg, &BlipScope::Full).unwrap();
    let lazy = fit_ltv(&s.panel, &weights, &cfg, &BlipScope::Sequences(queries.clone())).unwrap();
    for q in &queries {
        for n in s.targets() {
            assert_eq!(full.estimate(n, q).unwrap().value, lazy.estimate(n, q).unwrap().value);
        }
    }
}

#[test]
fn noiseless_estimates_match_the_oracle() {
    let s = Scenario::generate(&ScenarioConfig {
        variant: Variant::Lti,
        n_actions: 3,
        horizon: 3,
        design: Design::Rollout { multiplicity: 2, targets: 4 },
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let weights = OracleWeights::new(s.factors.clone());
    let fit = fit_lti(&s.panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
    let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
    for q in random_sequences(3, 20, 3, 3) {
        for n in 0..s.panel.n_units() {
            let e = fit.estimate(n, &q).unwrap();
            assert!((e.value - oracle.counterfactual(n, &q).unwrap()).abs() <= 1e-8);
        }
    }
}

#[test]
fn fitted_tables_round_trip_through_json() {
    let s = noisy(Variant::Lti, 8);
    let weights = OracleWeights::new(s.factors.clone());
    let fit = fit_lti(&s.panel, &weights, &EstimatorConfig::default(), &BlipScope::Full).unwrap();
    let text = serde_json::to_string(&fit).unwrap();
    let back: synthblip::estimators::LtiFit = serde_json::from_str(&text).unwrap();
    assert_eq!(back, fit);
    let q = seq("1-0-2-0");
    assert_eq!(back.estimate(0, &q).unwrap(), fit.estimate(0, &q).unwrap());
}
