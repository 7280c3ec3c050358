//! Seeded synthetic scenarios: a system shared by every unit, low-rank unit
//! loadings, and an assignment design that decides which donor sets exist.
//!
//! Unit `n` has a loading vector `λ_n ∈ R^r`; its outcome loadings are
//! `θ_n = Σ_k λ_{n,k} θ^{(k)}` (and likewise `θ̃_n`, or `v_{n,t}` for the
//! general model), while the transition and input matrices are shared. Every
//! latent factor is therefore linear in `λ_n`, and any `r` donors with
//! independent loadings span every target.

use crate::dgp::{
    simulate, simulate_general, LtiSystemParams, LtvSystemParams, NoiseLog, PolicyRule,
    PolicySpec, SimulationError, SimulationSpec, SystemParams, UnitPolicy,
};
use crate::factors::{GeneralFactors, LatentFactors};
use crate::panel::{ActionId, ActionSequence, ControlSchedule, Panel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    General,
    Ltv,
    Lti,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::General => "general",
            Variant::Ltv => "ltv",
            Variant::Lti => "lti",
        }
    }
}

/// A single control action, or one per observed period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlSpec {
    Invariant(usize),
    TimeVarying(Vec<usize>),
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Invariant(0)
    }
}

impl ControlSpec {
    pub fn schedule(&self) -> ControlSchedule {
        match self {
            ControlSpec::Invariant(a) => ControlSchedule::TimeInvariant(ActionId(*a)),
            ControlSpec::TimeVarying(v) => {
                ControlSchedule::TimeVarying(v.iter().copied().map(ActionId).collect())
            }
        }
    }
}

/// Who takes which actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum Design {
    /// `multiplicity` never-treated units, `multiplicity` units for every
    /// `(t, a)` deviation with `a` non-control and `t <= T` (exogenous
    /// through `t`, adaptive afterwards), and `targets` fully adaptive units.
    /// Donors in each role are clones of the `r` basis loadings.
    Rollout { multiplicity: usize, targets: usize },
    /// Every unit draws a uniformly random, pre-committed action sequence.
    Random { units: usize },
    /// `per_sequence` exogenous donors for each listed sequence (padded with
    /// control actions beyond `T`), plus `targets` adaptive units.
    Sequences {
        sequences: Vec<ActionSequence>,
        per_sequence: usize,
        targets: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub variant: Variant,
    pub n_actions: usize,
    pub horizon: usize,
    /// Defaults to `2T − 1` for LTI and `T` otherwise.
    pub obs_horizon: Option<usize>,
    pub latent_dim: usize,
    pub rank: usize,
    pub state_noise: f64,
    pub outcome_noise: f64,
    pub control: ControlSpec,
    pub design: Design,
    /// Length of the per-unit covariate vectors for PCR weights; 0 for none.
    pub covariates: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            variant: Variant::Lti,
            n_actions: 2,
            horizon: 3,
            obs_horizon: None,
            latent_dim: 2,
            rank: 2,
            state_noise: 0.0,
            outcome_noise: 0.0,
            control: ControlSpec::default(),
            design: Design::Rollout {
                multiplicity: 4,
                targets: 4,
            },
            covariates: 0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn resolved_obs_horizon(&self) -> usize {
        self.obs_horizon.unwrap_or(match self.variant {
            Variant::Lti => 2 * self.horizon - 1,
            _ => self.horizon,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.horizon == 0 || self.n_actions == 0 || self.latent_dim == 0 || self.rank == 0 {
            return bad("horizon, n_actions, latent_dim and rank must be positive".into());
        }
        let obs = self.resolved_obs_horizon();
        if obs < self.horizon || obs > 2 * self.horizon - 1 {
            return bad(format!(
                "obs_horizon {obs} outside {}..={}",
                self.horizon,
                2 * self.horizon - 1
            ));
        }
        if !(self.state_noise >= 0.0 && self.outcome_noise >= 0.0) {
            return bad("noise scales must be non-negative".into());
        }
        match &self.control {
            ControlSpec::Invariant(a) if *a >= self.n_actions => {
                return bad(format!("control action {a} outside 0..{}", self.n_actions));
            }
            ControlSpec::TimeVarying(v) => {
                if v.len() < obs {
                    return bad(format!("control schedule covers {} of {obs} periods", v.len()));
                }
                if v.iter().any(|&a| a >= self.n_actions) {
                    return bad("control schedule names an unknown action".into());
                }
                if self.variant == Variant::Lti {
                    return bad("the LTI model needs a time-invariant control action".into());
                }
            }
            _ => {}
        }
        if let Design::Sequences { sequences, .. } = &self.design {
            for s in sequences {
                if s.len() != self.horizon {
                    return bad(format!("design sequence {s} does not have length {}", self.horizon));
                }
                if s.iter().any(|a| a.0 >= self.n_actions) {
                    return bad(format!("design sequence {s} names an unknown action"));
                }
            }
        }
        Ok(())
    }
}

/// What a unit was generated to be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Role {
    Control,
    Deviate { time: usize, action: ActionId },
    Sequence { sequence: ActionSequence },
    Random,
    Target,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub panel: Panel,
    pub factors: LatentFactors,
    pub params: Option<SystemParams>,
    pub noise: Option<NoiseLog>,
    pub roles: Vec<Role>,
    pub loadings: Vec<Vec<f64>>,
    /// One covariate vector per unit (empty rows when disabled).
    pub covariates: Vec<Vec<f64>>,
}

/// Deterministic seed derivation (SplitMix64 finalizer over each part).
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

const STREAM_SYSTEM: u64 = 1;
const STREAM_LOADINGS: u64 = 2;
const STREAM_ASSIGNMENT: u64 = 3;
const STREAM_COVARIATES: u64 = 4;
const STREAM_NOISE: u64 = 5;
const STREAM_EMBEDDINGS: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random `d x d` matrix with spectral norm at most `bound`.
fn contraction(rng: &mut ChaCha8Rng, d: usize, bound: f64) -> Vec<f64> {
    let g = gaussian(rng, d * d, 1.0);
    let fro = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    g.into_iter().map(|x| bound * x / fro).collect()
}

fn input_matrix(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let g = gaussian(rng, d * d, 0.3 / (d as f64).sqrt());
    (0..d * d)
        .map(|i| g[i] + if i % (d + 1) == 0 { 1.0 } else { 0.0 })
        .collect()
}

fn combine(loading: &[f64], archetypes: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; archetypes[0].len()];
    for (l, a) in loading.iter().zip(archetypes) {
        for (o, x) in out.iter_mut().zip(a) {
            *o += l * x;
        }
    }
    out
}

/// Shared system pieces; unit-specific loadings are mixed in later.
struct SharedSystem {
    /// `[t-1]` for LTV; a single entry for LTI.
    transition: Vec<Vec<f64>>,
    input: Vec<Vec<f64>>,
    /// `[t-1][k]` archetype outcome loadings.
    theta: Vec<Vec<Vec<f64>>>,
    theta_direct: Vec<Vec<Vec<f64>>>,
    embeddings: Vec<Vec<f64>>,
    /// General model `V^{(k)}_t` as `[t-1][k]`.
    general: Vec<Vec<Vec<f64>>>,
}

fn shared_system(cfg: &ScenarioConfig, obs: usize) -> SharedSystem {
    let d = cfg.latent_dim;
    let r = cfg.rank;
    let mut rng = stream(cfg.seed, STREAM_SYSTEM);
    let periods = if cfg.variant == Variant::Ltv { obs } else { 1 };
    let transition = (0..periods).map(|_| contraction(&mut rng, d, 0.7)).collect();
    let input = (0..periods).map(|_| input_matrix(&mut rng, d)).collect();
    let scale = 1.0 / (d as f64).sqrt();
    let theta = (0..periods)
        .map(|_| (0..r).map(|_| gaussian(&mut rng, d, scale)).collect())
        .collect();
    let theta_direct = (0..periods)
        .map(|_| (0..r).map(|_| gaussian(&mut rng, d, 0.5 * scale)).collect())
        .collect();
    let embeddings = (0..cfg.n_actions).map(|_| gaussian(&mut rng, d, 1.0)).collect();
    let general = (0..obs)
        .map(|_| (0..r).map(|_| gaussian(&mut rng, d, scale)).collect())
        .collect();
    SharedSystem {
        transition,
        input,
        theta,
        theta_direct,
        embeddings,
        general,
    }
}

/// Embedding `w_{ā^t}` of the general model, a pure function of
/// `(seed, sequence)` so it can be materialized lazily.
pub fn general_embedding(seed: u64, seq: &ActionSequence, dim: usize) -> Vec<f64> {
    // FNV-1a over the action indices.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for a in seq.iter() {
        for byte in (a.0 as u64).to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut rng = stream(mix_seed(seed, &[STREAM_EMBEDDINGS, h]), 0);
    gaussian(&mut rng, dim, 1.0)
}

fn padded(seq: &ActionSequence, control: &ControlSchedule, obs: usize) -> Vec<ActionId> {
    (1..=obs)
        .map(|t| if t <= seq.len() { seq.at(t) } else { control.at(t) })
        .collect()
}

fn adaptive_rule(cfg: &ScenarioConfig) -> PolicyRule {
    PolicyRule::Threshold {
        cutoff: 0.0,
        above: ActionId(cfg.n_actions - 1),
        below: ActionId(0),
    }
}

struct Assignment {
    roles: Vec<Role>,
    policies: Vec<UnitPolicy>,
    /// Whether each unit takes a basis loading (clone) or a random one.
    clone_slot: Vec<Option<usize>>,
}

fn assign(cfg: &ScenarioConfig, control: &ControlSchedule, obs: usize) -> Assignment {
    let mut roles = Vec::new();
    let mut policies = Vec::new();
    let mut clone_slot = Vec::new();
    let rule = adaptive_rule(cfg);
    let target = |roles: &mut Vec<Role>, policies: &mut Vec<UnitPolicy>, slot: &mut Vec<Option<usize>>| {
        roles.push(Role::Target);
        policies.push(UnitPolicy {
            committed: vec![],
            rule: rule.clone(),
        });
        slot.push(None);
    };
    match &cfg.design {
        Design::Rollout {
            multiplicity,
            targets,
        } => {
            for i in 0..*multiplicity {
                roles.push(Role::Control);
                policies.push(UnitPolicy::committed(control.prefix(obs).into_inner()));
                clone_slot.push(Some(i));
            }
            for t in 1..=cfg.horizon {
                for a in (0..cfg.n_actions).map(ActionId) {
                    if control.is_control(t, a) {
                        continue;
                    }
                    for i in 0..*multiplicity {
                        let committed: Vec<ActionId> = (1..=obs)
                            .map(|s| if s == t { a } else { control.at(s) })
                            .collect();
                        roles.push(Role::Deviate { time: t, action: a });
                        policies.push(UnitPolicy::committed(committed));
                        clone_slot.push(Some(i));
                    }
                }
            }
            for _ in 0..*targets {
                target(&mut roles, &mut policies, &mut clone_slot);
            }
        }
        Design::Random { units } => {
            let mut rng = stream(cfg.seed, STREAM_ASSIGNMENT);
            for _ in 0..*units {
                let committed = (0..obs)
                    .map(|_| ActionId(rng.random_range(0..cfg.n_actions)))
                    .collect();
                roles.push(Role::Random);
                policies.push(UnitPolicy::committed(committed));
                clone_slot.push(None);
            }
        }
        Design::Sequences {
            sequences,
            per_sequence,
            targets,
        } => {
            for s in sequences {
                for _ in 0..*per_sequence {
                    roles.push(Role::Sequence { sequence: s.clone() });
                    policies.push(UnitPolicy::committed(padded(s, control, obs)));
                    clone_slot.push(None);
                }
            }
            for _ in 0..*targets {
                target(&mut roles, &mut policies, &mut clone_slot);
            }
        }
    }
    Assignment {
        roles,
        policies,
        clone_slot,
    }
}

/// Realizes the policies of the general model up front: adaptive targets get
/// a uniformly random sequence instead.
fn general_sequences(
    cfg: &ScenarioConfig,
    control: &ControlSchedule,
    obs: usize,
    policies: &[UnitPolicy],
) -> Vec<ActionSequence> {
    let mut rng = stream(cfg.seed, STREAM_ASSIGNMENT + 100);
    policies
        .iter()
        .map(|p| {
            let mut acts = p.committed.clone();
            let random_tail = !matches!(p.rule, PolicyRule::FollowControl);
            while acts.len() < obs {
                let t = acts.len() + 1;
                acts.push(if random_tail {
                    ActionId(rng.random_range(0..cfg.n_actions))
                } else {
                    control.at(t)
                });
            }
            ActionSequence::new(acts).expect("obs >= 1")
        })
        .collect()
}

impl Scenario {
    pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
        cfg.validate()?;
        let obs = cfg.resolved_obs_horizon();
        let control = cfg.control.schedule();
        let shared = shared_system(cfg, obs);
        let Assignment {
            roles,
            policies,
            clone_slot,
        } = assign(cfg, &control, obs);
        let n_units = roles.len();
        if n_units == 0 {
            return Err(ScenarioError::Invalid("the design produces no units".into()));
        }
        let r = cfg.rank;
        let mut rng = stream(cfg.seed, STREAM_LOADINGS);
        let loadings: Vec<Vec<f64>> = clone_slot
            .iter()
            .map(|slot| match slot {
                Some(i) => (0..r).map(|k| if k == i % r { 1.0 } else { 0.0 }).collect(),
                None => gaussian(&mut rng, r, 1.0),
            })
            .collect();

        let sim_seed = mix_seed(cfg.seed, &[STREAM_NOISE]);
        let (panel, factors, params, noise) = match cfg.variant {
            Variant::General => {
                let seqs = general_sequences(cfg, &control, obs, &policies);
                let mut w = BTreeMap::new();
                for s in &seqs {
                    for t in 1..=obs {
                        let p = s.prefix(t);
                        if !w.contains_key(&p) {
                            let e = general_embedding(cfg.seed, &p, cfg.latent_dim);
                            w.insert(p, e);
                        }
                    }
                }
                let factors = GeneralFactors {
                    unit: loadings
                        .iter()
                        .map(|l| (0..obs).map(|t| combine(l, &shared.general[t])).collect())
                        .collect(),
                    sequence: w,
                };
                let panel = simulate_general(
                    &factors,
                    &seqs,
                    cfg.n_actions,
                    &control,
                    cfg.horizon,
                    cfg.outcome_noise,
                    sim_seed,
                )?;
                (panel, LatentFactors::General(factors), None, None)
            }
            Variant::Ltv | Variant::Lti => {
                let params = if cfg.variant == Variant::Ltv {
                    let per_t = |f: &dyn Fn(usize) -> Vec<f64>| -> Vec<Vec<f64>> {
                        (0..obs).map(f).collect()
                    };
                    SystemParams::Ltv(LtvSystemParams {
                        latent_dim: cfg.latent_dim,
                        transition: vec![shared.transition.clone(); n_units],
                        input: vec![shared.input.clone(); n_units],
                        outcome_loading: loadings
                            .iter()
                            .map(|l| per_t(&|t| combine(l, &shared.theta[t])))
                            .collect(),
                        direct_loading: loadings
                            .iter()
                            .map(|l| per_t(&|t| combine(l, &shared.theta_direct[t])))
                            .collect(),
                        action_embedding: shared.embeddings.clone(),
                        state_noise: cfg.state_noise,
                        outcome_noise: cfg.outcome_noise,
                    })
                } else {
                    SystemParams::Lti(LtiSystemParams {
                        latent_dim: cfg.latent_dim,
                        transition: vec![shared.transition[0].clone(); n_units],
                        input: vec![shared.input[0].clone(); n_units],
                        outcome_loading: loadings.iter().map(|l| combine(l, &shared.theta[0])).collect(),
                        direct_loading: loadings
                            .iter()
                            .map(|l| combine(l, &shared.theta_direct[0]))
                            .collect(),
                        action_embedding: shared.embeddings.clone(),
                        state_noise: cfg.state_noise,
                        outcome_noise: cfg.outcome_noise,
                    })
                };
                let spec = SimulationSpec {
                    params,
                    policies: PolicySpec { units: policies },
                    control: control.clone(),
                    horizon: cfg.horizon,
                    obs_horizon: obs,
                    seed: sim_seed,
                };
                let sim = simulate(&spec)?;
                (sim.panel, sim.factors, Some(spec.params), Some(sim.noise))
            }
        };

        let covariates = if cfg.covariates == 0 {
            vec![Vec::new(); n_units]
        } else {
            let mut rng = stream(cfg.seed, STREAM_COVARIATES);
            let projection: Vec<Vec<f64>> =
                (0..r).map(|_| gaussian(&mut rng, cfg.covariates, 1.0)).collect();
            let sigma = cfg.outcome_noise;
            loadings
                .iter()
                .map(|l| {
                    combine(l, &projection)
                        .into_iter()
                        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        };

        Ok(Scenario {
            config: cfg.clone(),
            panel,
            factors,
            params,
            noise,
            roles,
            loadings,
            covariates,
        })
    }

    /// Adds general-model embeddings for `sequences` (and their prefixes) so
    /// the oracle can evaluate them. A no-op for the dynamic models.
    pub fn ensure_embeddings(&mut self, sequences: &[ActionSequence]) {
        if let LatentFactors::General(f) = &mut self.factors {
            for s in sequences {
                for t in 1..=s.len() {
                    let p = s.prefix(t);
                    if !f.sequence.contains_key(&p) {
                        let e = general_embedding(self.config.seed, &p, self.config.latent_dim);
                        f.sequence.insert(p, e);
                    }
                }
            }
        }
    }

    /// Units generated as targets.
    pub fn targets(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(r, Role::Target))
            .map(|(n, _)| n)
            .collect()
    }

    /// Factors in the layout an estimator of `variant` expects: LTI loadings
    /// are re-indexed by `(t, l)` for the LTV estimator.
    pub fn factors_for(&self, variant: Variant) -> LatentFactors {
        match (&self.factors, variant) {
            (LatentFactors::Lti(f), Variant::Ltv) => LatentFactors::Ltv(f.to_ltv()),
            (f, _) => f.clone(),
        }
    }
}

/// `count` sequences of length `horizon`, uniform over actions.
pub fn random_sequences(seed: u64, count: usize, horizon: usize, n_actions: usize) -> Vec<ActionSequence> {
    let mut rng = stream(seed, STREAM_ASSIGNMENT + 200);
    (0..count)
        .map(|_| {
            let acts: Vec<ActionId> = (0..horizon)
                .map(|_| ActionId(rng.random_range(0..n_actions)))
                .collect();
            ActionSequence::new(acts).expect("horizon >= 1")
        })
        .collect()
}

/// Every sequence of length `horizon`, lexicographic.
pub fn all_sequences(horizon: usize, n_actions: usize) -> Vec<ActionSequence> {
    let count = n_actions.pow(horizon as u32);
    (0..count)
        .map(|mut code| {
            let mut digits = vec![0usize; horizon];
            for d in digits.iter_mut().rev() {
                *d = code % n_actions;
                code /= n_actions;
            }
            ActionSequence::from_indices(&digits).expect("horizon >= 1")
        })
        .collect()
}
