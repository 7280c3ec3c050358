// Ground-truth expected outcomes for every unit and every action sequence.

use synthblip::oracle::Oracle;
use synthblip::scenario::{Scenario, ScenarioConfig, Variant};

fn main() {
    run_example();
}

pub fn run_example() {
    let s = Scenario::generate(&ScenarioConfig {
        variant: Variant::Ltv,
        seed: 7,
        ..Default::default()
    })
    .expect("scenario");
    let oracle = Oracle::new(s.factors.clone(), s.panel.control().clone());
    let table = oracle.brute_force_table(3, 2, 1 << 10).expect("table");
    println!("{} rows", table.rows.len());
    let mut out = Vec::new();
    table.write_csv(&mut out).unwrap();
    for line in String::from_utf8(out).unwrap().lines().take(9) {
        println!("{line}");
    }
}
