// Principal component regression weights: the retained rank trades the fit
// of the target's covariates against the weight norm.

use synthblip::weights::{PcrConfig, RankRule, SpanProjector};

fn main() {
    run_example();
}

pub fn run_example() {
    // Six donors whose covariates lie near a rank-2 subspace.
    let basis = [[1.0, 0.0, 2.0, -1.0, 0.5], [0.0, 1.0, -1.0, 1.0, 2.0]];
    let mix = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0], [-1.0, 0.5], [0.5, 0.5]];
    let donors: Vec<Vec<f64>> = mix
        .iter()
        .enumerate()
        .map(|(j, m)| {
            (0..5)
                .map(|i| m[0] * basis[0][i] + m[1] * basis[1][i] + 1e-3 * ((i * 7 + j * 3) % 5) as f64)
                .collect()
        })
        .collect();
    let target: Vec<f64> = (0..5).map(|i| 0.3 * basis[0][i] - 0.7 * basis[1][i]).collect();

    for k in 1..=5 {
        let w = SpanProjector::fit(&donors, &PcrConfig::fixed(k)).unwrap().apply(0, &target).unwrap();
        let norm = w.beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        println!("k = {k}: residual {:.3e}, |beta| {norm:.3}", w.residual);
    }
    let auto = SpanProjector::fit(
        &donors,
        &PcrConfig {
            rank_rule: RankRule::EnergyThreshold { fraction: 0.999 },
            ..Default::default()
        },
    )
    .unwrap();
    let sv: Vec<String> = auto.singular_values().iter().map(|s| format!("{s:.3e}")).collect();
    println!("singular values [{}], energy rule keeps k = {}", sv.join(", "), auto.rank());
    assert_eq!(auto.rank(), 2);
}
