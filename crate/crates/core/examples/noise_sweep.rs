// Estimation error against donor multiplicity and noise scale.

use synthblip::harness::{run_sweep, ExperimentConfig};

fn main() {
    run_example();
}

pub fn run_example() {
    let cfg = ExperimentConfig::from_toml(
        r#"
seed = 6
[dgp]
variant = "lti"
[estimator]
weights = "oracle"
[sweep]
multiplicity = [4, 16, 64]
sigma = [0.0, 0.5]
replications = 4
estimators = ["ltv", "lti"]
"#,
    )
    .expect("config");
    let report = run_sweep(&cfg).expect("sweep");
    for c in &report.cells {
        println!(
            "{:>3} M={:<3} sigma={:<3} rmse {:.3e} over {} replications",
            c.estimator,
            c.multiplicity,
            c.sigma,
            c.rmse(),
            c.replications
        );
    }
}
