// Donor requirements by model: SI needs donors for every sequence, LTV for
// every (period, action) pair, LTI for every action.

use synthblip::harness::donor_census;
use synthblip::scenario::{Design, Scenario, ScenarioConfig, Variant};

fn main() {
    run_example();
}

pub fn run_example() {
    for (label, design) in [
        ("random, 64 units", Design::Random { units: 64 }),
        ("rollout, M = 3", Design::Rollout { multiplicity: 3, targets: 1 }),
    ] {
        let s = Scenario::generate(&ScenarioConfig {
            variant: Variant::Lti,
            horizon: 5,
            design,
            seed: 5,
            ..Default::default()
        })
        .expect("scenario");
        let c = donor_census(&s.panel, 2, 1 << 12);
        let si = c.si.as_ref().unwrap();
        let lti = c.lti.as_ref().unwrap();
        println!(
            "{label:<18} N={:<3} SI {}/{} deficient, LTV {}/{}, LTI {}/{}",
            s.panel.n_units(),
            si.deficient,
            si.total,
            c.ltv.deficient,
            c.ltv.total,
            lti.deficient,
            lti.total
        );
    }
}
