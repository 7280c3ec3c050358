//! Independent reference computations for the integration tests. Nothing here
//! calls into the library's numerics: factors come from explicit matrix
//! products and least squares from Gauss-Jordan elimination.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use synthblip::dgp::{
    LtiSystemParams, LtvSystemParams, NoiseLog, PolicyRule, PolicySpec, UnitPolicy,
};
use synthblip::panel::ActionId;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Row-major `d x d` product.
pub fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut c = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            for j in 0..d {
                c[i * d + j] += a[i * d + k] * b[k * d + j];
            }
        }
    }
    c
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// `M' v` for a row-major `d x d` matrix.
pub fn transpose_apply(m: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|j| (0..d).map(|i| m[i * d + j] * v[i]).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn random_ltv(rng: &mut ChaCha8Rng, n: usize, obs: usize, d: usize, n_actions: usize, noise: f64) -> LtvSystemParams {
    let per = |rng: &mut ChaCha8Rng, len: usize, s: f64| -> Vec<Vec<Vec<f64>>> {
        (0..n).map(|_| (0..obs).map(|_| gauss(rng, len, s)).collect()).collect()
    };
    let b_scale = 0.6 / (d as f64).sqrt();
    LtvSystemParams {
        latent_dim: d,
        transition: per(rng, d * d, b_scale),
        input: per(rng, d * d, 1.0),
        outcome_loading: per(rng, d, 1.0),
        direct_loading: per(rng, d, 1.0),
        action_embedding: (0..n_actions).map(|_| gauss(rng, d, 1.0)).collect(),
        state_noise: noise,
        outcome_noise: noise,
    }
}

pub fn random_lti(rng: &mut ChaCha8Rng, n: usize, d: usize, n_actions: usize, noise: f64) -> LtiSystemParams {
    let per = |rng: &mut ChaCha8Rng, len: usize, s: f64| -> Vec<Vec<f64>> {
        (0..n).map(|_| gauss(rng, len, s)).collect()
    };
    let b_scale = 0.6 / (d as f64).sqrt();
    LtiSystemParams {
        latent_dim: d,
        transition: per(rng, d * d, b_scale),
        input: per(rng, d * d, 1.0),
        outcome_loading: per(rng, d, 1.0),
        direct_loading: per(rng, d, 1.0),
        action_embedding: (0..n_actions).map(|_| gauss(rng, d, 1.0)).collect(),
        state_noise: noise,
        outcome_noise: noise,
    }
}

/// A mix of committed, threshold-adaptive and randomized units.
pub fn mixed_policies(rng: &mut ChaCha8Rng, n: usize, obs: usize, n_actions: usize) -> PolicySpec {
    let units = (0..n)
        .map(|i| {
            let k = rng.random_range(0..=obs);
            let committed = (0..k).map(|_| ActionId(rng.random_range(0..n_actions))).collect();
            let rule = match i % 3 {
                0 => PolicyRule::Threshold {
                    cutoff: 0.0,
                    above: ActionId(n_actions - 1),
                    below: ActionId(0),
                },
                1 => PolicyRule::UniformRandom { seed: rng.random() },
                _ => PolicyRule::Constant {
                    action: ActionId(rng.random_range(0..n_actions)),
                },
            };
            UnitPolicy { committed, rule }
        })
        .collect();
    PolicySpec { units }
}

/// `(B_t ⋯ B_{l+1} C_l)' θ_t`, plus `θ̃_t` when `l = t`.
pub fn ltv_psi(p: &LtvSystemParams, n: usize, t: usize, l: usize) -> Vec<f64> {
    let d = p.latent_dim;
    let mut prod = identity(d);
    for s in (l + 1..=t).rev() {
        prod = matmul(&prod, &p.transition[n][s - 1], d);
    }
    let m = matmul(&prod, &p.input[n][l - 1], d);
    let mut psi = transpose_apply(&m, &p.outcome_loading[n][t - 1], d);
    if l == t {
        for (x, y) in psi.iter_mut().zip(&p.direct_loading[n][t - 1]) {
            *x += y;
        }
    }
    psi
}

/// Noise part of `Y_{n,t}`: `Σ_l θ_t' B_t ⋯ B_{l+1} η_l + η̃_t`.
pub fn ltv_noise(p: &LtvSystemParams, noise: &NoiseLog, n: usize, t: usize) -> f64 {
    let d = p.latent_dim;
    let mut total = noise.outcome[n][t - 1];
    for l in 1..=t {
        let mut prod = identity(d);
        for s in (l + 1..=t).rev() {
            prod = matmul(&prod, &p.transition[n][s - 1], d);
        }
        total += dot(&transpose_apply(&prod, &p.outcome_loading[n][t - 1], d), &noise.state[n][l - 1]);
    }
    total
}

/// `C' (B')^k θ`, plus `θ̃` at lag 0.
pub fn lti_psi(p: &LtiSystemParams, n: usize, lag: usize) -> Vec<f64> {
    let d = p.latent_dim;
    let mut pow = identity(d);
    for _ in 0..lag {
        pow = matmul(&pow, &p.transition[n], d);
    }
    let m = matmul(&pow, &p.input[n], d);
    let mut psi = transpose_apply(&m, &p.outcome_loading[n], d);
    if lag == 0 {
        for (x, y) in psi.iter_mut().zip(&p.direct_loading[n]) {
            *x += y;
        }
    }
    psi
}

pub fn lti_noise(p: &LtiSystemParams, noise: &NoiseLog, n: usize, t: usize) -> f64 {
    let d = p.latent_dim;
    let mut total = noise.outcome[n][t - 1];
    for l in 1..=t {
        let mut pow = identity(d);
        for _ in 0..t - l {
            pow = matmul(&pow, &p.transition[n], d);
        }
        total += dot(&transpose_apply(&pow, &p.outcome_loading[n], d), &noise.state[n][l - 1]);
    }
    total
}

/// Solves the square system `a x = b` by Gauss-Jordan with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-12, "singular system");
        for r in 0..n {
            if r != col {
                let f = a[r][col] / p;
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Minimum-norm least-squares `β` for `Σ_j β_j donors[j] ≈ target`, for a
/// donor matrix of full row or column rank, via the normal equations.
pub fn min_norm_lstsq(donors: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
    let m = donors.len();
    let p = target.len();
    if m <= p {
        // Full row rank: β = (D D')^{-1} D x.
        let g: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| dot(&donors[i], &donors[j])).collect()).collect();
        let rhs: Vec<f64> = donors.iter().map(|d| dot(d, target)).collect();
        solve(g, rhs)
    } else {
        // Full column rank: β = D (D'D)^{-1} x.
        let g: Vec<Vec<f64>> = (0..p)
            .map(|a| (0..p).map(|b| donors.iter().map(|d| d[a] * d[b]).sum()).collect())
            .collect();
        let c = solve(g, target.to_vec());
        donors.iter().map(|d| dot(d, &c)).collect()
    }
}
