//! Latent factor tensors for the three model variants.
//!
//! Index layouts (all 0-based in storage, 1-based in accessors):
//! * general: `unit[n][t-1]` is `v_{n,t}`; `sequence[ā^t]` is `w_{ā^t}`.
//! * LTV: `psi[n][t-1][l-1]` is the loading of the action taken at `l` on the
//!   outcome at `t`, for `1 <= l <= t`.
//! * LTI: `psi[n][k]` is the loading at lag `k`, `0 <= k < T_obs`.

use crate::linalg::dot;
use crate::panel::{ActionId, ActionSequence};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralFactors {
    /// `v_{n,t}` as `unit[n][t-1]`; dimension may vary with `t`.
    pub unit: Vec<Vec<Vec<f64>>>,
    /// Sparse `w_{ā^t}`: only sequences that were realized or queried.
    pub sequence: BTreeMap<ActionSequence, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtvFactors {
    pub psi: Vec<Vec<Vec<Vec<f64>>>>,
    pub action_embedding: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiFactors {
    pub psi: Vec<Vec<Vec<f64>>>,
    pub action_embedding: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LatentFactors {
    General(GeneralFactors),
    Ltv(LtvFactors),
    Lti(LtiFactors),
}

impl LtvFactors {
    #[inline]
    pub fn psi(&self, n: usize, t: usize, l: usize) -> &[f64] {
        &self.psi[n][t - 1][l - 1]
    }

    pub fn embedding(&self, a: ActionId) -> &[f64] {
        &self.action_embedding[a.0]
    }

    pub fn n_units(&self) -> usize {
        self.psi.len()
    }

    /// `Σ_l <ψ^{t,l}_n, w_{a_l}>` for `t = seq.len()`.
    pub fn mean_outcome(&self, n: usize, seq: &ActionSequence) -> f64 {
        let t = seq.len();
        (1..=t)
            .map(|l| dot(self.psi(n, t, l), self.embedding(seq.at(l))))
            .sum()
    }
}

impl LtiFactors {
    #[inline]
    pub fn psi(&self, n: usize, lag: usize) -> &[f64] {
        &self.psi[n][lag]
    }

    pub fn embedding(&self, a: ActionId) -> &[f64] {
        &self.action_embedding[a.0]
    }

    pub fn n_units(&self) -> usize {
        self.psi.len()
    }

    pub fn mean_outcome(&self, n: usize, seq: &ActionSequence) -> f64 {
        let t = seq.len();
        (1..=t)
            .map(|l| dot(self.psi(n, t - l), self.embedding(seq.at(l))))
            .sum()
    }

    /// The same loadings indexed by `(t, l)`: `ψ^{t,l} = ψ^{t-l}`.
    pub fn to_ltv(&self) -> LtvFactors {
        let psi = self
            .psi
            .iter()
            .map(|lags| {
                (1..=lags.len())
                    .map(|t| (1..=t).map(|l| lags[t - l].clone()).collect())
                    .collect()
            })
            .collect();
        LtvFactors {
            psi,
            action_embedding: self.action_embedding.clone(),
        }
    }
}

impl GeneralFactors {
    pub fn v(&self, n: usize, t: usize) -> &[f64] {
        &self.unit[n][t - 1]
    }

    pub fn w(&self, seq: &ActionSequence) -> Option<&[f64]> {
        self.sequence.get(seq).map(Vec::as_slice)
    }

    pub fn n_units(&self) -> usize {
        self.unit.len()
    }
}

impl LatentFactors {
    pub fn n_units(&self) -> usize {
        match self {
            LatentFactors::General(f) => f.n_units(),
            LatentFactors::Ltv(f) => f.n_units(),
            LatentFactors::Lti(f) => f.n_units(),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            LatentFactors::General(_) => "general",
            LatentFactors::Ltv(_) => "ltv",
            LatentFactors::Lti(_) => "lti",
        }
    }

    /// The unit factor that donor weights must reproduce, stacked over its
    /// components: `v_{n,T}` (general), `[ψ^{T,1}, ..., ψ^{T,T}]` (LTV), or
    /// `[ψ^0, ..., ψ^{lags-1}]` (LTI, `lags` defaults to `horizon`).
    pub fn stacked(&self, n: usize, horizon: usize, lags: Option<usize>) -> Vec<f64> {
        match self {
            LatentFactors::General(f) => f.v(n, horizon).to_vec(),
            LatentFactors::Ltv(f) => (1..=horizon)
                .flat_map(|l| f.psi(n, horizon, l).iter().copied())
                .collect(),
            LatentFactors::Lti(f) => (0..lags.unwrap_or(horizon))
                .flat_map(|k| f.psi(n, k).iter().copied())
                .collect(),
        }
    }
}
