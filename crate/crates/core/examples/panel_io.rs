// Writes a simulated panel to disk, reads it back, and lists its donor sets.

use synthblip::harness::donor_listing;
use synthblip::io::{read_panel, write_panel};
use synthblip::scenario::{Scenario, ScenarioConfig};

fn main() {
    run_example();
}

pub fn run_example() {
    let s = Scenario::generate(&ScenarioConfig {
        state_noise: 0.2,
        outcome_noise: 0.2,
        seed: 8,
        ..Default::default()
    })
    .expect("scenario");
    let dir = std::env::temp_dir().join(format!("synthblip-panel-io-{}", std::process::id()));
    write_panel(&dir, &s.panel).expect("write");
    let back = read_panel(&dir).expect("read");
    assert_eq!(back, s.panel);
    println!("round-tripped {} units through {}", back.n_units(), dir.display());
    print!("{}", donor_listing(&back, 1 << 10));
    std::fs::remove_dir_all(&dir).ok();
}
