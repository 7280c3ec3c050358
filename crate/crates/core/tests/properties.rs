mod common;

use common::*;
use proptest::prelude::*;
use synthblip::dgp::{simulate, SimulationSpec, SystemParams};
use synthblip::donors::DonorIndex;
use synthblip::harness::Aggregates;
use synthblip::oracle::Oracle;
use synthblip::panel::{ActionId, ControlSchedule};
use synthblip::scenario::{all_sequences, Design, Scenario, ScenarioConfig, Variant};
use synthblip::weights::{PcrConfig, SpanProjector};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn ltv_sim(seed: u64, n: usize, obs: usize, d: usize, n_actions: usize, noise: f64) -> (synthblip::dgp::Simulation, synthblip::dgp::LtvSystemParams) {
    let mut r = rng(seed);
    let params = random_ltv(&mut r, n, obs, d, n_actions, noise);
    let policies = mixed_policies(&mut r, n, obs, n_actions);
    let sim = simulate(&SimulationSpec {
        params: SystemParams::Ltv(params.clone()),
        policies,
        control: ControlSchedule::TimeInvariant(ActionId(0)),
        horizon: obs,
        obs_horizon: obs,
        seed,
    })
    .unwrap();
    (sim, params)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn outcomes_equal_factor_sum_plus_noise(
        seed in any::<u64>(),
        n in 1usize..6,
        obs in 1usize..5,
        d in 1usize..4,
        n_actions in 2usize..4,
        noise in 0.0f64..1.0,
    ) {
        let (sim, p) = ltv_sim(seed, n, obs, d, n_actions, noise);
        for u in 0..n {
            for t in 1..=obs {
                let mean: f64 = (1..=t)
                    .map(|l| dot(&ltv_psi(&p, u, t, l), &p.action_embedding[sim.panel.action(u, l).index()]))
                    .sum();
                let y = mean + ltv_noise(&p, &sim.noise, u, t);
                let scale = 1.0 + y.abs();
                prop_assert!((sim.panel.outcome(u, t) - y).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), noise in 0.0f64..1.0) {
        let (a, _) = ltv_sim(seed, 4, 3, 2, 3, noise);
        let (b, _) = ltv_sim(seed, 4, 3, 2, 3, noise);
        prop_assert_eq!(a.panel, b.panel);
        prop_assert_eq!(a.noise, b.noise);
    }

    #[test]
    fn telescoping_holds_for_every_sequence(seed in any::<u64>(), obs in 1usize..4, n_actions in 2usize..4) {
        let (sim, _) = ltv_sim(seed, 3, obs, 2, n_actions, 0.0);
        let oracle = Oracle::new(sim.factors.clone(), sim.panel.control().clone());
        for q in all_sequences(obs, n_actions) {
            for u in 0..3 {
                let r = oracle.telescoping_check(u, &q).unwrap();
                prop_assert!(r.relative() <= 1e-12, "{:?}", r);
            }
        }
    }

    #[test]
    fn pseudoinverse_weights_match_normal_equations(
        seed in any::<u64>(),
        m in 1usize..7,
        p in 1usize..7,
    ) {
        let mut r = rng(seed);
        let donors: Vec<Vec<f64>> = (0..m).map(|_| gauss(&mut r, p, 1.0)).collect();
        let target = gauss(&mut r, p, 1.0);
        let proj = SpanProjector::fit(&donors, &PcrConfig::pseudoinverse()).unwrap();
        let w = proj.apply(0, &target).unwrap();
        prop_assert_eq!(w.rank, m.min(p));
        let reference = min_norm_lstsq(&donors, &target);
        for (x, y) in w.beta.iter().zip(&reference) {
            prop_assert!((x - y).abs() <= 1e-7 * (1.0 + y.abs()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn residual_is_nonincreasing_in_rank(seed in any::<u64>(), m in 2usize..8, p in 2usize..8) {
        let mut r = rng(seed);
        let donors: Vec<Vec<f64>> = (0..m).map(|_| gauss(&mut r, p, 1.0)).collect();
        let target = gauss(&mut r, p, 1.0);
        let mut last = f64::INFINITY;
        for k in 1..=m.min(p) {
            let w = SpanProjector::fit(&donors, &PcrConfig::fixed(k)).unwrap().apply(0, &target).unwrap();
            prop_assert!(w.residual <= last + 1e-10);
            last = w.residual;
        }
    }

    #[test]
    fn weights_are_invariant_to_joint_rescaling(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let donors: Vec<Vec<f64>> = (0..5).map(|_| gauss(&mut r, 4, 1.0)).collect();
        let target = gauss(&mut r, 4, 1.0);
        let cfg = PcrConfig::fixed(3);
        let a = SpanProjector::fit(&donors, &cfg).unwrap().apply(0, &target).unwrap();
        let scaled: Vec<Vec<f64>> = donors.iter().map(|d| d.iter().map(|x| c * x).collect()).collect();
        let st: Vec<f64> = target.iter().map(|x| c * x).collect();
        let b = SpanProjector::fit(&scaled, &cfg).unwrap().apply(0, &st).unwrap();
        for (x, y) in a.beta.iter().zip(&b.beta) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn donor_sets_nest_and_partition(seed in any::<u64>(), obs in 2usize..5, n_actions in 2usize..4) {
        let (sim, _) = ltv_sim(seed, 12, obs, 2, n_actions, 0.3);
        let index = DonorIndex::new(&sim.panel);
        for t in 1..obs {
            let later = index.control_through(t + 1).unwrap();
            let earlier = index.control_through(t).unwrap();
            prop_assert!(later.members.iter().all(|&u| earlier.contains(u)));
        }
        for t in 1..=obs {
            let stay = index.control_through(t).unwrap();
            let before = if t > 1 { Some(index.control_through(t - 1).unwrap()) } else { None };
            for a in 1..n_actions {
                let dev = index.ltv_action(ActionId(a), t).unwrap();
                prop_assert!(dev.members.iter().all(|&u| !stay.contains(u)));
                if let Some(b) = &before {
                    prop_assert!(dev.members.iter().all(|&u| b.contains(u)));
                }
            }
        }
        let mut seen = vec![false; 12];
        for q in all_sequences(obs, n_actions) {
            for u in index.si(&q).unwrap().members {
                prop_assert!(!seen[u]);
                prop_assert_eq!(sim.panel.actions(u), q.as_slice());
                seen[u] = true;
            }
        }
    }

    #[test]
    fn aggregates_are_ordered_and_recomputable(errs in prop::collection::vec(0.0f64..10.0, 1..50)) {
        let a = Aggregates::from_errors(&errs);
        prop_assert_eq!(a.count, errs.len());
        prop_assert!(a.mean_abs <= a.rmse + 1e-12);
        prop_assert!(a.rmse <= a.max_abs + 1e-12);
        let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
        prop_assert!((a.rmse - mse.sqrt()).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn scenarios_regenerate_identically(seed in any::<u64>(), variant in prop_oneof![Just(Variant::Ltv), Just(Variant::Lti), Just(Variant::General)]) {
        let cfg = ScenarioConfig {
            variant,
            state_noise: 0.5,
            outcome_noise: 0.5,
            design: Design::Rollout { multiplicity: 2, targets: 2 },
            seed,
            ..Default::default()
        };
        let a = Scenario::generate(&cfg).unwrap();
        let b = Scenario::generate(&cfg).unwrap();
        prop_assert_eq!(a.panel, b.panel);
    }
}
