//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 42
//!
//! [dgp]
//! variant = "lti"
//! n_actions = 2
//! horizon = 3
//! latent_dim = 2
//! rank = 2
//! state_noise = 1.0
//! outcome_noise = 1.0
//!
//! [dgp.design]
//! design = "rollout"
//! multiplicity = 16
//! targets = 8
//!
//! [estimator]
//! kind = "lti"
//! weights = "oracle"
//!
//! [query]
//! random = 20
//!
//! [sweep]
//! multiplicity = [16, 64, 256]
//! sigma = [1.0]
//! replications = 200
//! estimators = ["ltv", "lti"]
//! ```

use crate::estimators::EstimatorConfig;
use crate::panel::ActionSequence;
use crate::scenario::{ControlSpec, Design, ScenarioConfig, Variant};
use crate::weights::PcrConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Si,
    Ltv,
    Lti,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Si => "si",
            EstimatorKind::Ltv => "ltv",
            EstimatorKind::Lti => "lti",
        }
    }

    /// The factor layout this estimator's oracle weights and truth use.
    pub fn factor_variant(self, dgp: Variant) -> Variant {
        match self {
            EstimatorKind::Si => dgp,
            EstimatorKind::Ltv => Variant::Ltv,
            EstimatorKind::Lti => Variant::Lti,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsKind {
    Pcr,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Stop at the first donor or horizon deficit.
    #[default]
    FailFast,
    /// Log the deficit and continue with the remaining queries.
    Record,
}

fn default_variant() -> Variant {
    Variant::Lti
}
fn default_actions() -> usize {
    2
}
fn default_horizon() -> usize {
    3
}
fn default_dim() -> usize {
    2
}
fn default_design() -> Design {
    Design::Rollout {
        multiplicity: 4,
        targets: 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_actions")]
    pub n_actions: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub obs_horizon: Option<usize>,
    #[serde(default = "default_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_dim")]
    pub rank: usize,
    #[serde(default)]
    pub state_noise: f64,
    #[serde(default)]
    pub outcome_noise: f64,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub covariates: usize,
    #[serde(default = "default_design")]
    pub design: Design,
}

impl Default for DgpSection {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl DgpSection {
    pub fn scenario(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            variant: self.variant,
            n_actions: self.n_actions,
            horizon: self.horizon,
            obs_horizon: self.obs_horizon,
            latent_dim: self.latent_dim,
            rank: self.rank,
            state_noise: self.state_noise,
            outcome_noise: self.outcome_noise,
            control: self.control.clone(),
            design: self.design.clone(),
            covariates: self.covariates,
            seed,
        }
    }
}

fn default_weights() -> WeightsKind {
    WeightsKind::Oracle
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// Defaults to the estimator matching the DGP variant.
    #[serde(default)]
    pub kind: Option<EstimatorKind>,
    #[serde(default = "default_weights")]
    pub weights: WeightsKind,
    /// Defaults to the DGP rank.
    #[serde(default)]
    pub min_donors: Option<usize>,
    #[serde(default)]
    pub pcr: PcrConfig,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySection {
    /// Number of uniformly random query sequences.
    #[serde(default)]
    pub random: usize,
    #[serde(default)]
    pub sequences: Vec<ActionSequence>,
    /// Units to query; defaults to the scenario's targets, or every unit.
    #[serde(default)]
    pub units: Option<Vec<usize>>,
}

fn default_reps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub multiplicity: Vec<usize>,
    pub sigma: Vec<f64>,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub estimators: Vec<EstimatorKind>,
    /// Adaptive target units per replication.
    #[serde(default)]
    pub targets: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub failure: FailurePolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dgp: DgpSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub query: QuerySection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn scenario(&self) -> ScenarioConfig {
        self.dgp.scenario(self.seed)
    }

    pub fn estimator_kind(&self) -> EstimatorKind {
        self.estimator.kind.unwrap_or(match self.dgp.variant {
            Variant::General => EstimatorKind::Si,
            Variant::Ltv => EstimatorKind::Ltv,
            Variant::Lti => EstimatorKind::Lti,
        })
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            min_donors: self.estimator.min_donors.unwrap_or(self.dgp.rank),
        }
    }

    /// Lists every schema violation and incompatibility.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        if let Err(e) = self.scenario().validate() {
            issues.push(e.to_string());
        }
        let time_varying = matches!(self.dgp.control, ControlSpec::TimeVarying(_));
        let mut kinds = vec![self.estimator_kind()];
        if let Some(s) = &self.sweep {
            kinds.extend(&s.estimators);
        }
        for kind in kinds {
            if kind == EstimatorKind::Lti && time_varying {
                issues.push("the lti estimator needs a time-invariant control action, but [dgp] control is time-varying".into());
            }
            if kind != EstimatorKind::Si && self.dgp.variant == Variant::General {
                issues.push(format!(
                    "the {} estimator needs a dynamical-system DGP, not the general factor model",
                    kind.name()
                ));
            }
            if kind == EstimatorKind::Lti && self.dgp.variant == Variant::Ltv {
                issues.push("the lti estimator cannot be scored against a time-varying (ltv) DGP".into());
            }
        }
        for s in &self.query.sequences {
            if s.len() != self.dgp.horizon {
                issues.push(format!("query sequence {s} does not have length {}", self.dgp.horizon));
            }
            if s.iter().any(|a| a.0 >= self.dgp.n_actions) {
                issues.push(format!("query sequence {s} names an unknown action"));
            }
        }
        if let Some(m) = pcr_issue(&self.estimator.pcr) {
            issues.push(m);
        }
        if let Some(s) = &self.sweep {
            if s.multiplicity.is_empty() || s.sigma.is_empty() {
                issues.push("[sweep] multiplicity and sigma must be non-empty".into());
            }
            if s.replications == 0 {
                issues.push("[sweep] replications must be at least 1".into());
            }
            if s.sigma.iter().any(|x| !(*x >= 0.0)) {
                issues.push("[sweep] sigma values must be non-negative".into());
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }
}

fn pcr_issue(cfg: &PcrConfig) -> Option<String> {
    use crate::weights::RankRule;
    match cfg.rank_rule {
        RankRule::Fixed { k: 0 } => Some("[estimator.pcr] fixed rank must be at least 1".into()),
        RankRule::EnergyThreshold { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
            Some("[estimator.pcr] energy fraction must lie in (0, 1]".into())
        }
        _ => None,
    }
}
