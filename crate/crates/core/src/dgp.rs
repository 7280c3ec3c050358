//! Data-generating processes: linear time-varying and time-invariant state
//! space systems driven by (possibly adaptive) policies, and the general
//! factor model with pre-assigned sequences.
//!
//! The state recursion is
//!
//! ```text
//! z_t = B_t z_{t-1} + C_t w_{A_t} + η_t,     z_0 = 0
//! Y_t = <θ_t, z_t> + <θ̃_t, w_{A_t}> + η̃_t
//! ```
//!
//! and its closed-form factor representation is
//! `ψ^{t,l} = (B_t ⋯ B_{l+1} C_l)' θ_t` for `l < t`, `ψ^{t,t} = C_t' θ_t + θ̃_t`,
//! with noise terms `ε_{t,l} = θ_t' B_t ⋯ B_{l+1} η_l` and
//! `ε_{t,t} = θ_t' η_t + η̃_t`.
//!
//! Every unit draws from its own RNG stream derived from `(seed, unit)`, so
//! units can be simulated in any order or in parallel with identical output.

use crate::factors::{GeneralFactors, LatentFactors, LtiFactors, LtvFactors};
use crate::linalg::{dot, mat_t_vec, mat_vec};
use crate::panel::{ActionId, ActionSequence, ControlSchedule, Panel, PanelParts, ValidationReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("parameter shapes: {0}")]
    Shape(String),
    #[error("policy emitted action {action} for unit {unit} at time {time}; only {n_actions} actions exist")]
    InvalidAction {
        unit: usize,
        time: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("no action embedding for sequence {0}")]
    MissingEmbedding(ActionSequence),
    #[error("dimension mismatch at (unit {unit}, time {time}): v has {v_dim}, w has {w_dim}")]
    DimensionMismatch {
        unit: usize,
        time: usize,
        v_dim: usize,
        w_dim: usize,
    },
    #[error("noise log does not cover unit {unit} through time {time}")]
    NoiseLog { unit: usize, time: usize },
    #[error(transparent)]
    Panel(#[from] ValidationReport),
}

/// Linear time-varying system; every array is indexed `[n][t-1]`.
/// Matrices are row-major `d x d` flat arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtvSystemParams {
    pub latent_dim: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub input: Vec<Vec<Vec<f64>>>,
    pub outcome_loading: Vec<Vec<Vec<f64>>>,
    pub direct_loading: Vec<Vec<Vec<f64>>>,
    /// `w_a` for each action.
    pub action_embedding: Vec<Vec<f64>>,
    pub state_noise: f64,
    pub outcome_noise: f64,
}

/// Linear time-invariant system; arrays indexed by unit only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystemParams {
    pub latent_dim: usize,
    pub transition: Vec<Vec<f64>>,
    pub input: Vec<Vec<f64>>,
    pub outcome_loading: Vec<Vec<f64>>,
    pub direct_loading: Vec<Vec<f64>>,
    pub action_embedding: Vec<Vec<f64>>,
    pub state_noise: f64,
    pub outcome_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SystemParams {
    Ltv(LtvSystemParams),
    Lti(LtiSystemParams),
}

impl SystemParams {
    pub fn latent_dim(&self) -> usize {
        match self {
            SystemParams::Ltv(p) => p.latent_dim,
            SystemParams::Lti(p) => p.latent_dim,
        }
    }

    pub fn n_units(&self) -> usize {
        match self {
            SystemParams::Ltv(p) => p.transition.len(),
            SystemParams::Lti(p) => p.transition.len(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.embeddings().len()
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        match self {
            SystemParams::Ltv(p) => &p.action_embedding,
            SystemParams::Lti(p) => &p.action_embedding,
        }
    }

    pub fn noise_scales(&self) -> (f64, f64) {
        match self {
            SystemParams::Ltv(p) => (p.state_noise, p.outcome_noise),
            SystemParams::Lti(p) => (p.state_noise, p.outcome_noise),
        }
    }

    #[inline]
    fn transition(&self, n: usize, t: usize) -> &[f64] {
        match self {
            SystemParams::Ltv(p) => &p.transition[n][t - 1],
            SystemParams::Lti(p) => &p.transition[n],
        }
    }

    #[inline]
    fn input(&self, n: usize, t: usize) -> &[f64] {
        match self {
            SystemParams::Ltv(p) => &p.input[n][t - 1],
            SystemParams::Lti(p) => &p.input[n],
        }
    }

    #[inline]
    fn outcome_loading(&self, n: usize, t: usize) -> &[f64] {
        match self {
            SystemParams::Ltv(p) => &p.outcome_loading[n][t - 1],
            SystemParams::Lti(p) => &p.outcome_loading[n],
        }
    }

    #[inline]
    fn direct_loading(&self, n: usize, t: usize) -> &[f64] {
        match self {
            SystemParams::Ltv(p) => &p.direct_loading[n][t - 1],
            SystemParams::Lti(p) => &p.direct_loading[n],
        }
    }

    /// Checks every array against `latent_dim` and, for LTV systems, that the
    /// time axis covers `obs_horizon`.
    pub fn validate(&self, obs_horizon: usize) -> Result<(), SimulationError> {
        let d = self.latent_dim();
        let n = self.n_units();
        let err = |msg: String| Err(SimulationError::Shape(msg));
        if d == 0 {
            return err("latent dimension must be at least 1".into());
        }
        if self.embeddings().is_empty() {
            return err("at least one action embedding is required".into());
        }
        for (a, w) in self.embeddings().iter().enumerate() {
            if w.len() != d {
                return err(format!("embedding of action {a} has length {}", w.len()));
            }
        }
        let (s1, s2) = self.noise_scales();
        if !(s1 >= 0.0 && s2 >= 0.0) {
            return err("noise scales must be non-negative".into());
        }
        match self {
            SystemParams::Ltv(p) => {
                let arrays = [
                    ("transition", &p.transition, d * d),
                    ("input", &p.input, d * d),
                    ("outcome_loading", &p.outcome_loading, d),
                    ("direct_loading", &p.direct_loading, d),
                ];
                for (name, arr, len) in arrays {
                    if arr.len() != n {
                        return err(format!("{name} has {} units, expected {n}", arr.len()));
                    }
                    for (u, per_t) in arr.iter().enumerate() {
                        if per_t.len() < obs_horizon {
                            return err(format!(
                                "{name}[{u}] covers {} periods, need {obs_horizon}",
                                per_t.len()
                            ));
                        }
                        if let Some(bad) = per_t.iter().position(|m| m.len() != len) {
                            return err(format!("{name}[{u}][{bad}] has wrong length"));
                        }
                    }
                }
            }
            SystemParams::Lti(p) => {
                let arrays = [
                    ("transition", &p.transition, d * d),
                    ("input", &p.input, d * d),
                    ("outcome_loading", &p.outcome_loading, d),
                    ("direct_loading", &p.direct_loading, d),
                ];
                for (name, arr, len) in arrays {
                    if arr.len() != n {
                        return err(format!("{name} has {} units, expected {n}", arr.len()));
                    }
                    if let Some(bad) = arr.iter().position(|m| m.len() != len) {
                        return err(format!("{name}[{bad}] has wrong length"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed-form latent factors implied by the system.
    pub fn factors(&self, obs_horizon: usize) -> LatentFactors {
        match self {
            SystemParams::Ltv(p) => ltv_factors_from_params(p, obs_horizon),
            SystemParams::Lti(p) => lti_factors_from_params(p, obs_horizon),
        }
    }
}

/// `ψ^{t,l}_n` for `1 <= l <= t <= obs_horizon`.
pub fn ltv_factors_from_params(p: &LtvSystemParams, obs_horizon: usize) -> LatentFactors {
    let sys = SystemParams::Ltv(p.clone());
    let psi = (0..sys.n_units())
        .map(|n| {
            (1..=obs_horizon)
                .map(|t| {
                    let mut out = vec![Vec::new(); t];
                    // g = (B_t ⋯ B_{l+1})' θ_t, updated as l decreases.
                    let mut g = sys.outcome_loading(n, t).to_vec();
                    for l in (1..=t).rev() {
                        let mut v = mat_t_vec(sys.input(n, l), &g);
                        if l == t {
                            for (x, y) in v.iter_mut().zip(sys.direct_loading(n, t)) {
                                *x += y;
                            }
                        }
                        out[l - 1] = v;
                        g = mat_t_vec(sys.transition(n, l), &g);
                    }
                    out
                })
                .collect()
        })
        .collect();
    LatentFactors::Ltv(LtvFactors {
        psi,
        action_embedding: p.action_embedding.clone(),
    })
}

/// `ψ^k_n` for lags `0 <= k < obs_horizon`.
pub fn lti_factors_from_params(p: &LtiSystemParams, obs_horizon: usize) -> LatentFactors {
    let psi = (0..p.transition.len())
        .map(|n| {
            let mut g = p.outcome_loading[n].clone();
            (0..obs_horizon)
                .map(|k| {
                    let mut v = mat_t_vec(&p.input[n], &g);
                    if k == 0 {
                        for (x, y) in v.iter_mut().zip(&p.direct_loading[n]) {
                            *x += y;
                        }
                    }
                    g = mat_t_vec(&p.transition[n], &g);
                    v
                })
                .collect()
        })
        .collect();
    LatentFactors::Lti(LtiFactors {
        psi,
        action_embedding: p.action_embedding.clone(),
    })
}

/// Post-commitment action rule. Rules see the previous action's embedding and
/// the current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PolicyRule {
    FollowControl,
    Constant { action: ActionId },
    /// `above` if `<θ, z_{t-1}> > cutoff`, else `below`.
    Threshold {
        cutoff: f64,
        above: ActionId,
        below: ActionId,
    },
    /// Uniform over all actions, from a stream seeded by `(seed, unit)`.
    UniformRandom { seed: u64 },
}

/// One unit's policy: a pre-committed prefix, then a rule. The committed
/// prefix length is the unit's declared exogeneity boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPolicy {
    pub committed: Vec<ActionId>,
    pub rule: PolicyRule,
}

impl UnitPolicy {
    pub fn committed(actions: Vec<ActionId>) -> Self {
        UnitPolicy {
            committed: actions,
            rule: PolicyRule::FollowControl,
        }
    }

    /// First period chosen by the rule rather than the committed prefix.
    pub fn adaptive_from(&self) -> usize {
        self.committed.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub units: Vec<UnitPolicy>,
}

/// Every noise draw of a simulation, already scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLog {
    /// `η_{n,t}` as `state[n][t-1]`.
    pub state: Vec<Vec<Vec<f64>>>,
    /// `η̃_{n,t}` as `outcome[n][t-1]`.
    pub outcome: Vec<Vec<f64>>,
}

impl NoiseLog {
    fn check(&self, n: usize, t: usize) -> Result<(), SimulationError> {
        let ok = self.state.get(n).is_some_and(|s| s.len() >= t)
            && self.outcome.get(n).is_some_and(|s| s.len() >= t);
        if ok {
            Ok(())
        } else {
            Err(SimulationError::NoiseLog { unit: n, time: t })
        }
    }
}

/// Inputs of one state-space simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub params: SystemParams,
    pub policies: PolicySpec,
    pub control: ControlSchedule,
    pub horizon: usize,
    pub obs_horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: Panel,
    pub factors: LatentFactors,
    pub noise: NoiseLog,
}

pub(crate) fn unit_rng(seed: u64, unit: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit as u64);
    rng
}

struct UnitPath {
    outcomes: Vec<f64>,
    actions: Vec<ActionId>,
    state_noise: Vec<Vec<f64>>,
    outcome_noise: Vec<f64>,
}

fn roll_unit(spec: &SimulationSpec, n: usize) -> Result<UnitPath, SimulationError> {
    let p = &spec.params;
    let d = p.latent_dim();
    let n_actions = p.n_actions();
    let (s_state, s_out) = p.noise_scales();
    let policy = &spec.policies.units[n];
    let mut noise_rng = unit_rng(spec.seed, n);
    let mut rule_rng = match &policy.rule {
        PolicyRule::UniformRandom { seed } => Some(unit_rng(*seed, n)),
        _ => None,
    };

    let mut z = vec![0.0; d];
    let mut path = UnitPath {
        outcomes: Vec::with_capacity(spec.obs_horizon),
        actions: Vec::with_capacity(spec.obs_horizon),
        state_noise: Vec::with_capacity(spec.obs_horizon),
        outcome_noise: Vec::with_capacity(spec.obs_horizon),
    };
    for t in 1..=spec.obs_horizon {
        // Fixed draw order per period keeps streams aligned across policies and
        // noise scales.
        let eta: Vec<f64> = (0..d)
            .map(|_| s_state * noise_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let eta_tilde = s_out * noise_rng.sample::<f64, _>(StandardNormal);

        let action = if t <= policy.committed.len() {
            policy.committed[t - 1]
        } else {
            match &policy.rule {
                PolicyRule::FollowControl => spec.control.at(t),
                PolicyRule::Constant { action } => *action,
                PolicyRule::Threshold {
                    cutoff,
                    above,
                    below,
                } => {
                    let theta = p.outcome_loading(n, (t - 1).max(1));
                    if dot(theta, &z) > *cutoff {
                        *above
                    } else {
                        *below
                    }
                }
                PolicyRule::UniformRandom { .. } => {
                    let rng = rule_rng.as_mut().expect("rule stream");
                    ActionId(rng.random_range(0..n_actions))
                }
            }
        };
        if action.0 >= n_actions {
            return Err(SimulationError::InvalidAction {
                unit: n,
                time: t,
                action: action.0,
                n_actions,
            });
        }
        let w = &p.embeddings()[action.0];
        let mut next = mat_vec(p.transition(n, t), &z);
        let push = mat_vec(p.input(n, t), w);
        for i in 0..d {
            next[i] += push[i] + eta[i];
        }
        z = next;
        let y = dot(p.outcome_loading(n, t), &z) + dot(p.direct_loading(n, t), w) + eta_tilde;
        path.outcomes.push(y);
        path.actions.push(action);
        path.state_noise.push(eta);
        path.outcome_noise.push(eta_tilde);
    }
    Ok(path)
}

/// Rolls the state recursion forward for every unit under its policy.
///
/// `Panel.exogenous_until` is set to each unit's committed prefix length and
/// `declared_deviation` to the first committed non-control action, if any.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulation, SimulationError> {
    spec.params.validate(spec.obs_horizon)?;
    let n_units = spec.params.n_units();
    if spec.policies.units.len() != n_units {
        return Err(SimulationError::Shape(format!(
            "{} policies for {n_units} units",
            spec.policies.units.len()
        )));
    }
    let paths = (0..n_units)
        .into_par_iter()
        .map(|n| roll_unit(spec, n))
        .collect::<Result<Vec<_>, _>>()?;

    let exogenous_until = spec
        .policies
        .units
        .iter()
        .map(|u| u.committed.len().min(spec.obs_horizon))
        .collect();
    let declared_deviation = spec
        .policies
        .units
        .iter()
        .map(|u| {
            u.committed
                .iter()
                .take(spec.obs_horizon)
                .enumerate()
                .find(|(i, a)| **a != spec.control.at(i + 1))
                .map(|(i, _)| i + 1)
        })
        .collect();

    let mut outcomes = Vec::with_capacity(n_units);
    let mut actions = Vec::with_capacity(n_units);
    let mut state = Vec::with_capacity(n_units);
    let mut outcome_noise = Vec::with_capacity(n_units);
    for p in paths {
        outcomes.push(p.outcomes);
        actions.push(p.actions);
        state.push(p.state_noise);
        outcome_noise.push(p.outcome_noise);
    }
    let panel = Panel::new(PanelParts {
        n_actions: spec.params.n_actions(),
        horizon: spec.horizon,
        obs_horizon: spec.obs_horizon,
        outcomes,
        actions,
        control: spec.control.clone(),
        exogenous_until,
        declared_deviation,
    })?;
    Ok(Simulation {
        panel,
        factors: spec.params.factors(spec.obs_horizon),
        noise: NoiseLog {
            state,
            outcome: outcome_noise,
        },
    })
}

/// Potential outcome `Y^{(ā^t)}_{n,t}`: the recursion re-rolled under `seq`
/// with the logged noise of unit `n`.
pub fn counterfactual_replay(
    params: &SystemParams,
    noise: &NoiseLog,
    n: usize,
    seq: &ActionSequence,
) -> Result<f64, SimulationError> {
    let t_end = seq.len();
    noise.check(n, t_end)?;
    let d = params.latent_dim();
    let mut z = vec![0.0; d];
    let mut y = 0.0;
    for t in 1..=t_end {
        let a = seq.at(t);
        let w = params.embeddings().get(a.0).ok_or(SimulationError::InvalidAction {
            unit: n,
            time: t,
            action: a.0,
            n_actions: params.n_actions(),
        })?;
        let mut next = mat_vec(params.transition(n, t), &z);
        let push = mat_vec(params.input(n, t), w);
        for i in 0..d {
            next[i] += push[i] + noise.state[n][t - 1][i];
        }
        z = next;
        if t == t_end {
            y = dot(params.outcome_loading(n, t), &z)
                + dot(params.direct_loading(n, t), w)
                + noise.outcome[n][t - 1];
        }
    }
    Ok(y)
}

/// The additive noise terms `ε_{n,t,l}` for `l = 1..=t`, reconstructed from
/// the log. They do not depend on the actions taken.
pub fn noise_decomposition(
    params: &SystemParams,
    noise: &NoiseLog,
    n: usize,
    t: usize,
) -> Result<Vec<f64>, SimulationError> {
    noise.check(n, t)?;
    let mut eps = vec![0.0; t];
    let mut g = params.outcome_loading(n, t).to_vec();
    for l in (1..=t).rev() {
        eps[l - 1] = dot(&g, &noise.state[n][l - 1]);
        if l == t {
            eps[l - 1] += noise.outcome[n][t - 1];
        }
        g = mat_t_vec(params.transition(n, l), &g);
    }
    Ok(eps)
}

/// Panel from the general factor model `Y = <v_{n,t}, w_{Ā^t_n}> + ε` with each
/// unit's full sequence fixed up front, so `exogenous_until = T_obs`.
pub fn simulate_general(
    factors: &GeneralFactors,
    sequences: &[ActionSequence],
    n_actions: usize,
    control: &ControlSchedule,
    horizon: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<Panel, SimulationError> {
    if sequences.len() != factors.n_units() {
        return Err(SimulationError::Shape(format!(
            "{} sequences for {} units",
            sequences.len(),
            factors.n_units()
        )));
    }
    let obs = sequences.first().map_or(0, ActionSequence::len);
    let mut outcomes = Vec::with_capacity(sequences.len());
    for (n, seq) in sequences.iter().enumerate() {
        if seq.len() != obs {
            return Err(SimulationError::Shape(format!(
                "unit {n} has a sequence of length {}, expected {obs}",
                seq.len()
            )));
        }
        if factors.unit[n].len() < obs {
            return Err(SimulationError::Shape(format!(
                "v for unit {n} covers {} periods, need {obs}",
                factors.unit[n].len()
            )));
        }
        let mut rng = unit_rng(seed, n);
        let mut row = Vec::with_capacity(obs);
        for t in 1..=obs {
            let prefix = seq.prefix(t);
            let w = factors
                .w(&prefix)
                .ok_or_else(|| SimulationError::MissingEmbedding(prefix.clone()))?;
            let v = factors.v(n, t);
            if v.len() != w.len() {
                return Err(SimulationError::DimensionMismatch {
                    unit: n,
                    time: t,
                    v_dim: v.len(),
                    w_dim: w.len(),
                });
            }
            let eps: f64 = rng.sample(StandardNormal);
            row.push(dot(v, w) + noise_scale * eps);
        }
        outcomes.push(row);
    }
    let n = sequences.len();
    Ok(Panel::new(PanelParts {
        n_actions,
        horizon,
        obs_horizon: obs,
        outcomes,
        actions: sequences.iter().map(|s| s.as_slice().to_vec()).collect(),
        control: control.clone(),
        exogenous_until: vec![obs; n],
        declared_deviation: vec![None; n],
    })?)
}
