// Synthetic interventions: units that followed a sequence exogenously donate
// their outcomes to every other unit. Exact without noise; deficient when no
// unit followed the query.

use synthblip::donors::si_donors;
use synthblip::estimators::{estimate_si, EstimateError, EstimatorConfig, TermSource};
use synthblip::oracle::Oracle;
use synthblip::scenario::{all_sequences, Design, Scenario, ScenarioConfig, Variant};
use synthblip::weights::OracleWeights;

fn main() {
    run_example();
}

pub fn run_example() {
    let seq = "1-0-1".parse().unwrap();
    let s = Scenario::generate(&ScenarioConfig {
        variant: Variant::General,
        design: Design::Sequences {
            sequences: vec![seq],
            per_sequence: 4,
            targets: 3,
        },
        seed: 2,
        ..Default::default()
    })
    .expect("scenario");
    let seq = "1-0-1".parse().unwrap();
    let weights = OracleWeights::new(s.factors.clone());
    let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
    let cfg = EstimatorConfig::default();
    for n in s.targets() {
        let e = estimate_si(&s.panel, &weights, &cfg, n, &seq).unwrap();
        let truth = oracle.counterfactual(n, &seq).unwrap();
        let TermSource::Synthetic { n_donors, .. } = e.terms[0].source else { unreachable!() };
        println!("unit {n}: estimate {:+.6}, truth {:+.6}, {n_donors} donors", e.value, truth);
        assert!((e.value - truth).abs() < 1e-8);
    }
    let missing = all_sequences(3, 2)
        .into_iter()
        .find(|q| si_donors(&s.panel, q).unwrap().is_empty())
        .unwrap();
    match estimate_si(&s.panel, &weights, &cfg, 0, &missing) {
        Err(EstimateError::DonorDeficit { found, required, .. }) => {
            println!("{missing}: donor deficit ({found} < {required})")
        }
        other => panic!("expected a deficit, got {other:?}"),
    }
}
