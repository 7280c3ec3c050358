//! Configuration-driven experiments: simulate scenarios, fit estimators,
//! score them against the oracle, count donor sets, and sweep donor
//! multiplicity and noise.

pub mod config;
pub mod metrics;

pub use config::{
    ConfigError, DgpSection, EstimatorKind, EstimatorSection, ExperimentConfig, FailurePolicy,
    OutputSection, QuerySection, SweepSection, WeightsKind,
};
pub use metrics::{
    Aggregates, DeficitIncident, DonorCensus, FamilyCensus, MetricsReport, QueryRow, SweepCell,
    SweepReport, SweepRow,
};

use crate::donors::{DonorIndex, DonorKind};
use crate::estimators::{
    estimate_si_many, fit_lti, fit_ltv, BlipScope, CounterfactualEstimate, EstimateError,
    EstimatorConfig, LtiFit, LtvFit,
};
use crate::factors::LatentFactors;
use crate::io::{self, IoError};
use crate::oracle::{Oracle, OracleError, OracleTable};
use crate::panel::{ActionId, ActionSequence, Panel, ValidationReport};
use crate::scenario::{
    all_sequences, mix_seed, random_sequences, Design, Role, Scenario, ScenarioError, Variant,
};
use crate::weights::{
    weight_dump, CovariateSource, OracleWeights, PcrWeights, WeightsError, WeightsProvider,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

const QUERY_STREAM: u64 = 0x5155_4552_59;
const SWEEP_STREAM: u64 = 0x5357_4545_50;
/// Random query count when a config names no queries at all.
pub const DEFAULT_RANDOM_QUERIES: usize = 10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{context}: {source}")]
    Estimate {
        context: String,
        #[source]
        source: EstimateError,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Validation(#[from] ValidationReport),
    #[error("{0}")]
    Usage(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for donor or
    /// horizon deficits, 4 for panel validation failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Usage(_) => 2,
            HarnessError::Scenario(ScenarioError::Invalid(_)) => 2,
            HarnessError::Oracle(OracleError::CapExceeded { .. }) => 2,
            HarnessError::Estimate { source, .. } if is_deficit(source) => 3,
            HarnessError::Validation(_) | HarnessError::Io(IoError::Invalid(_)) => 4,
            _ => 1,
        }
    }
}

/// Too few donors, periods, or shared control periods to answer a query.
pub fn is_deficit(e: &EstimateError) -> bool {
    matches!(
        e,
        EstimateError::DonorDeficit { .. }
            | EstimateError::HorizonDeficit { .. }
            | EstimateError::Weights {
                source: WeightsError::NoDonors | WeightsError::NoControlWindow { .. },
                ..
            }
    )
}

/// Generates the configured scenario and, if `out` is given, writes the
/// panel, metadata, factors, noise log, parameters, roles and covariates.
pub fn run_simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Scenario, HarnessError> {
    let scenario = Scenario::generate(&cfg.scenario())?;
    if let Some(dir) = out {
        write_scenario(dir, &scenario)?;
    }
    Ok(scenario)
}

pub fn write_scenario(dir: &Path, s: &Scenario) -> Result<(), IoError> {
    io::write_panel(dir, &s.panel)?;
    io::write_json(&dir.join(io::FACTORS_FILE), &s.factors)?;
    io::write_json(&dir.join(io::ROLES_FILE), &s.roles)?;
    if let Some(noise) = &s.noise {
        io::write_json(&dir.join(io::NOISE_FILE), noise)?;
    }
    if let Some(params) = &s.params {
        io::write_json(&dir.join(io::PARAMS_FILE), params)?;
    }
    if s.covariates.iter().any(|c| !c.is_empty()) {
        io::write_json(&dir.join(io::COVARIATES_FILE), &s.covariates)?;
    }
    Ok(())
}

/// Explicit query sequences followed by the configured number of random
/// ones, seeded from the experiment seed.
pub fn query_sequences(cfg: &ExperimentConfig) -> Vec<ActionSequence> {
    let mut seqs = cfg.query.sequences.clone();
    let random = if seqs.is_empty() && cfg.query.random == 0 {
        DEFAULT_RANDOM_QUERIES
    } else {
        cfg.query.random
    };
    seqs.extend(random_sequences(
        mix_seed(cfg.seed, &[QUERY_STREAM]),
        random,
        cfg.dgp.horizon,
        cfg.dgp.n_actions,
    ));
    seqs
}

/// Everything an estimation run reads.
#[derive(Debug, Clone)]
pub struct EstimateInputs<'a> {
    pub panel: &'a Panel,
    /// Known factors: enable oracle weights and error measurement.
    pub factors: Option<&'a LatentFactors>,
    /// Per-unit covariates for PCR; the control window is used when absent.
    pub covariates: Option<&'a [Vec<f64>]>,
    pub units: Vec<usize>,
    pub sequences: Vec<ActionSequence>,
    /// Cap on `|A|^T` for the SI census.
    pub max_enum: usize,
}

/// Fitted tables of the dynamic estimators, for reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum FittedTables {
    Ltv(LtvFit),
    Lti(LtiFit),
}

#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub report: MetricsReport,
    pub tables: Option<FittedTables>,
}

/// Factors in the layout `kind` expects.
pub fn factors_for_estimator(factors: &LatentFactors, kind: EstimatorKind) -> LatentFactors {
    match (factors, kind) {
        (LatentFactors::Lti(f), EstimatorKind::Ltv) => LatentFactors::Ltv(f.to_ltv()),
        (f, _) => f.clone(),
    }
}

pub fn weights_provider(
    kind: WeightsKind,
    estimator: EstimatorKind,
    cfg: &ExperimentConfig,
    factors: Option<&LatentFactors>,
    covariates: Option<&[Vec<f64>]>,
) -> Result<Box<dyn WeightsProvider>, HarnessError> {
    Ok(match kind {
        WeightsKind::Oracle => {
            let f = factors.ok_or_else(|| {
                HarnessError::Usage("oracle weights need the latent factors of the panel".into())
            })?;
            Box::new(OracleWeights::new(factors_for_estimator(f, estimator)))
        }
        WeightsKind::Pcr => {
            let source = match covariates {
                Some(c) if c.iter().all(|r| !r.is_empty()) => CovariateSource::Explicit(c.to_vec()),
                _ => CovariateSource::ControlWindow,
            };
            Box::new(PcrWeights::new(cfg.estimator.pcr, source))
        }
    })
}

enum Fitted {
    Ltv(LtvFit),
    Lti(LtiFit),
}

fn fit_dynamic(
    kind: EstimatorKind,
    panel: &Panel,
    weights: &dyn WeightsProvider,
    est: &EstimatorConfig,
    scope: &BlipScope,
) -> Result<Fitted, EstimateError> {
    match kind {
        EstimatorKind::Ltv => fit_ltv(panel, weights, est, scope).map(Fitted::Ltv),
        EstimatorKind::Lti => fit_lti(panel, weights, est, scope).map(Fitted::Lti),
        EstimatorKind::Si => unreachable!("SI has no fitted tables"),
    }
}

impl Fitted {
    fn estimate(&self, n: usize, seq: &ActionSequence) -> Result<CounterfactualEstimate, EstimateError> {
        match self {
            Fitted::Ltv(f) => f.estimate(n, seq),
            Fitted::Lti(f) => f.estimate(n, seq),
        }
    }

    fn conservation(&self, panel: &Panel) -> Result<crate::estimators::ConservationReport, EstimateError> {
        match self {
            Fitted::Ltv(f) => f.check_conservation(panel),
            Fitted::Lti(f) => f.check_conservation(panel),
        }
    }

    fn into_tables(self) -> FittedTables {
        match self {
            Fitted::Ltv(f) => FittedTables::Ltv(f),
            Fitted::Lti(f) => FittedTables::Lti(f),
        }
    }
}

fn query_context(n: usize, seq: &ActionSequence) -> String {
    format!("query (unit {n}, sequence {seq})")
}

/// Fits the configured estimator, answers every `(unit, sequence)` query,
/// and scores against the oracle when factors are known.
pub fn run_estimate(
    cfg: &ExperimentConfig,
    inputs: &EstimateInputs<'_>,
) -> Result<EstimateOutcome, HarnessError> {
    let kind = cfg.estimator_kind();
    let est = cfg.estimator_config();
    let panel = inputs.panel;
    let fail_fast = cfg.output.failure == FailurePolicy::FailFast;
    let weights = weights_provider(cfg.estimator.weights, kind, cfg, inputs.factors, inputs.covariates)?;
    let oracle = inputs
        .factors
        .map(|f| Oracle::new(factors_for_estimator(f, kind), panel.control().clone()));
    let queries: Vec<(usize, ActionSequence)> = inputs
        .units
        .iter()
        .flat_map(|&n| inputs.sequences.iter().map(move |s| (n, s.clone())))
        .collect();

    let mut deficits = Vec::new();
    let results: Vec<Result<CounterfactualEstimate, EstimateError>>;
    let mut conservation = None;
    let mut tables = None;
    match kind {
        EstimatorKind::Si => {
            results = estimate_si_many(panel, weights.as_ref(), &est, &queries);
        }
        EstimatorKind::Ltv | EstimatorKind::Lti => {
            let scope = BlipScope::Sequences(inputs.sequences.clone());
            match fit_dynamic(kind, panel, weights.as_ref(), &est, &scope) {
                Ok(fit) => {
                    conservation = Some(fit.conservation(panel).map_err(|source| {
                        HarnessError::Estimate {
                            context: "conservation check".into(),
                            source,
                        }
                    })?);
                    results = queries.iter().map(|(n, s)| fit.estimate(*n, s)).collect();
                    tables = Some(fit.into_tables());
                }
                Err(source) if fail_fast || !is_deficit(&source) => {
                    return Err(HarnessError::Estimate {
                        context: format!("fitting the {} estimator", kind.name()),
                        source,
                    });
                }
                Err(source) => {
                    deficits.push(DeficitIncident {
                        query: None,
                        message: source.to_string(),
                    });
                    results = queries.iter().map(|_| Err(source.clone())).collect();
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(queries.len());
    for ((n, seq), result) in queries.into_iter().zip(results) {
        let truth = oracle.as_ref().and_then(|o| o.counterfactual(n, &seq).ok());
        match result {
            Ok(e) => rows.push(QueryRow {
                unit: n,
                abs_error: truth.map(|t| (e.value - t).abs()),
                estimate: Some(e.value),
                oracle: truth,
                sequence: seq,
                error: None,
            }),
            Err(source) => {
                if fail_fast || !is_deficit(&source) {
                    return Err(HarnessError::Estimate {
                        context: query_context(n, &seq),
                        source,
                    });
                }
                if kind == EstimatorKind::Si {
                    deficits.push(DeficitIncident {
                        query: Some((n, seq.clone())),
                        message: source.to_string(),
                    });
                }
                rows.push(QueryRow {
                    unit: n,
                    sequence: seq,
                    estimate: None,
                    oracle: truth,
                    abs_error: None,
                    error: Some(source.to_string()),
                });
            }
        }
    }
    let report = MetricsReport {
        estimator: kind.name().into(),
        weights: weights.name().into(),
        aggregates: Aggregates::from_rows(&rows),
        rows,
        deficits,
        census: Some(donor_census(panel, est.min_donors, inputs.max_enum)),
        conservation,
    };
    Ok(EstimateOutcome { report, tables })
}

fn census_of(sets: impl Iterator<Item = (String, usize)>, min: usize) -> FamilyCensus {
    let mut c = FamilyCensus {
        total: 0,
        deficient: 0,
        deficient_sets: Vec::new(),
    };
    for (name, size) in sets {
        c.total += 1;
        if size < min {
            c.deficient += 1;
            c.deficient_sets.push(name);
        }
    }
    c
}

/// Counts the donor sets each estimator would need for every query and how
/// many fall below `min_donors`.
pub fn donor_census(panel: &Panel, min_donors: usize, max_enum: usize) -> DonorCensus {
    let min = min_donors.max(1);
    let index = DonorIndex::new(panel);
    let horizon = panel.horizon();
    let n_actions = panel.n_actions();
    let control = panel.control();
    let size = |kind: DonorKind| index.set(&kind).map_or(0, |s| s.len());

    let si = n_actions
        .checked_pow(horizon as u32)
        .filter(|&c| c <= max_enum)
        .map(|_| {
            census_of(
                all_sequences(horizon, n_actions).into_iter().map(|s| {
                    let n = size(DonorKind::Si { sequence: s.clone() });
                    (format!("si({s})"), n)
                }),
                min,
            )
        });

    let ltv = census_of(
        (1..=horizon).flat_map(|t| {
            (0..n_actions).map(move |a| (t, ActionId(a)))
        })
        .map(|(t, a)| {
            let kind = if control.is_control(t, a) {
                DonorKind::ControlThrough { time: t }
            } else {
                DonorKind::LtvAction { action: a, time: t }
            };
            (format!("a={a}, t={t}"), size(kind))
        }),
        min,
    );

    let lti = control.invariant_action().map(|c| {
        let control_family = (1..=panel.obs_horizon())
            .map(|t| size(DonorKind::ControlThrough { time: t }))
            .min()
            .unwrap_or(0);
        let families = std::iter::once(("control".to_string(), control_family)).chain(
            (0..n_actions).map(ActionId).map(|a| {
                if a == c {
                    (format!("a={a} (control)"), usize::MAX)
                } else {
                    (
                        format!("a={a}"),
                        size(DonorKind::LtiAction {
                            action: a,
                            first_period_only: false,
                        }),
                    )
                }
            }),
        );
        census_of(families, min)
    });

    DonorCensus {
        min_donors: min,
        si,
        ltv,
        lti,
    }
}

/// Text listing of every donor set the census covers.
pub fn donor_listing(panel: &Panel, max_enum: usize) -> String {
    let index = DonorIndex::new(panel);
    let mut kinds = Vec::new();
    let horizon = panel.horizon();
    if panel
        .n_actions()
        .checked_pow(horizon as u32)
        .is_some_and(|c| c <= max_enum)
    {
        kinds.extend(
            all_sequences(horizon, panel.n_actions())
                .into_iter()
                .map(|sequence| DonorKind::Si { sequence }),
        );
    }
    for t in 1..=panel.obs_horizon() {
        kinds.push(DonorKind::ControlThrough { time: t });
    }
    for t in 1..=horizon {
        for a in (0..panel.n_actions()).map(ActionId) {
            if !panel.control().is_control(t, a) {
                kinds.push(DonorKind::LtvAction { action: a, time: t });
            }
        }
    }
    if let Some(c) = panel.control().invariant_action() {
        for a in (0..panel.n_actions()).map(ActionId).filter(|&a| a != c) {
            kinds.push(DonorKind::LtiAction {
                action: a,
                first_period_only: false,
            });
        }
    }
    kinds
        .iter()
        .filter_map(|k| index.set(k).ok())
        .map(|s| s.listing())
        .collect()
}

/// One replication of one sweep cell: per-estimator absolute errors over
/// every target and query sequence.
pub fn sweep_replication(
    cfg: &ExperimentConfig,
    multiplicity: usize,
    sigma: f64,
    rep: usize,
    estimators: &[EstimatorKind],
    sequences: &[ActionSequence],
) -> Result<Vec<Result<Vec<f64>, String>>, HarnessError> {
    let sweep = cfg.sweep.as_ref();
    let targets = sweep
        .and_then(|s| s.targets)
        .or(match cfg.dgp.design {
            Design::Rollout { targets, .. } => Some(targets),
            _ => None,
        })
        .unwrap_or(8)
        .max(1);
    let mut sc = cfg.scenario();
    sc.design = Design::Rollout {
        multiplicity,
        targets,
    };
    sc.state_noise = sigma;
    sc.outcome_noise = sigma;
    sc.seed = mix_seed(
        cfg.seed,
        &[SWEEP_STREAM, multiplicity as u64, sigma.to_bits(), rep as u64],
    );
    let scenario = Scenario::generate(&sc)?;
    let est = cfg.estimator_config();
    let units = scenario.targets();
    let scope = BlipScope::Sequences(sequences.to_vec());
    let queries: Vec<(usize, ActionSequence)> = units
        .iter()
        .flat_map(|&n| sequences.iter().map(move |s| (n, s.clone())))
        .collect();
    let mut out = Vec::with_capacity(estimators.len());
    for &kind in estimators {
        let factors = factors_for_estimator(&scenario.factors, kind);
        let weights = weights_provider(
            cfg.estimator.weights,
            kind,
            cfg,
            Some(&factors),
            Some(&scenario.covariates),
        )?;
        let oracle = Oracle::new(factors, scenario.panel.control().clone());
        let estimates: Result<Vec<f64>, EstimateError> = match kind {
            EstimatorKind::Si => estimate_si_many(&scenario.panel, weights.as_ref(), &est, &queries)
                .into_iter()
                .map(|r| r.map(|e| e.value))
                .collect(),
            _ => fit_dynamic(kind, &scenario.panel, weights.as_ref(), &est, &scope).and_then(|fit| {
                queries
                    .iter()
                    .map(|(n, s)| fit.estimate(*n, s).map(|e| e.value))
                    .collect()
            }),
        };
        out.push(
            estimates
                .map(|values| {
                    values
                        .iter()
                        .zip(&queries)
                        .map(|(v, (n, s))| {
                            let truth = oracle
                                .counterfactual(*n, s)
                                .expect("oracle covers every simulated unit");
                            (v - truth).abs()
                        })
                        .collect()
                })
                .map_err(|e| e.to_string()),
        );
    }
    Ok(out)
}

/// Runs every `(M, σ)` cell of the sweep grid with `R` replications each.
/// Replications that fail are recorded in their cell and skipped.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("the config has no [sweep] section".into()))?;
    if cfg.dgp.variant == Variant::General {
        return Err(HarnessError::Usage(
            "sweeps need a dynamical-system DGP (variant ltv or lti)".into(),
        ));
    }
    let estimators = if sweep.estimators.is_empty() {
        vec![cfg.estimator_kind()]
    } else {
        sweep.estimators.clone()
    };
    let sequences = query_sequences(cfg);
    let mut report = SweepReport::default();
    for &m in &sweep.multiplicity {
        for &sigma in &sweep.sigma {
            let reps = (0..sweep.replications)
                .into_par_iter()
                .map(|rep| sweep_replication(cfg, m, sigma, rep, &estimators, &sequences))
                .collect::<Vec<_>>();
            let mut per_estimator: Vec<(Vec<f64>, usize, Vec<String>)> =
                vec![(Vec::new(), 0, Vec::new()); estimators.len()];
            for (rep, result) in reps.into_iter().enumerate() {
                match result {
                    Ok(values) => {
                        for (i, v) in values.into_iter().enumerate() {
                            match v {
                                Ok(errors) => {
                                    report.rows.push(SweepRow {
                                        multiplicity: m,
                                        sigma,
                                        rep,
                                        estimator: estimators[i].name().into(),
                                        rmse: Aggregates::from_errors(&errors).rmse,
                                    });
                                    per_estimator[i].0.extend(errors);
                                    per_estimator[i].1 += 1;
                                }
                                Err(e) => per_estimator[i].2.push(format!("rep {rep}: {e}")),
                            }
                        }
                    }
                    Err(e) => {
                        for p in per_estimator.iter_mut() {
                            p.2.push(format!("rep {rep}: {e}"));
                        }
                    }
                }
            }
            for (i, (errors, replications, failures)) in per_estimator.into_iter().enumerate() {
                report.cells.push(SweepCell {
                    multiplicity: m,
                    sigma,
                    estimator: estimators[i].name().into(),
                    aggregates: Aggregates::from_errors(&errors),
                    replications,
                    failures,
                });
            }
        }
    }
    Ok(report)
}

/// A panel directory together with whatever side files it carries.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub factors: Option<LatentFactors>,
    pub covariates: Option<Vec<Vec<f64>>>,
    pub roles: Option<Vec<Role>>,
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, IoError> {
    if path.exists() {
        io::read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Reads and validates a panel directory written by [`run_simulate`].
pub fn load_panel_dir(dir: &Path) -> Result<LoadedPanel, HarnessError> {
    Ok(LoadedPanel {
        panel: io::read_panel(dir)?,
        factors: read_optional(&dir.join(io::FACTORS_FILE))?,
        covariates: read_optional(&dir.join(io::COVARIATES_FILE))?,
        roles: read_optional(&dir.join(io::ROLES_FILE))?,
    })
}

fn target_units(cfg: &ExperimentConfig, roles: Option<&[Role]>, n_units: usize) -> Vec<usize> {
    if let Some(units) = &cfg.query.units {
        return units.clone();
    }
    let targets: Vec<usize> = roles
        .unwrap_or(&[])
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, Role::Target))
        .map(|(n, _)| n)
        .collect();
    if targets.is_empty() {
        (0..n_units).collect()
    } else {
        targets
    }
}

/// The panel an estimate or oracle command works on: read from `panel_dir`
/// when given, otherwise simulated from the config.
pub fn panel_for(cfg: &ExperimentConfig, panel_dir: Option<&Path>) -> Result<LoadedPanel, HarnessError> {
    match panel_dir {
        Some(dir) => load_panel_dir(dir),
        None => {
            let mut s = run_simulate(cfg, None)?;
            s.ensure_embeddings(&query_sequences(cfg));
            Ok(LoadedPanel {
                panel: s.panel,
                factors: Some(s.factors),
                covariates: Some(s.covariates).filter(|c| c.iter().all(|r| !r.is_empty())),
                roles: Some(s.roles),
            })
        }
    }
}

/// Fits the configured estimator on `loaded` and answers the configured
/// queries for its target units.
pub fn estimate_loaded(
    cfg: &ExperimentConfig,
    loaded: &LoadedPanel,
    max_enum: usize,
) -> Result<EstimateOutcome, HarnessError> {
    let units = target_units(cfg, loaded.roles.as_deref(), loaded.panel.n_units());
    if let Some(&n) = units.iter().find(|&&n| n >= loaded.panel.n_units()) {
        return Err(HarnessError::Usage(format!(
            "query unit {n} is outside the panel ({} units)",
            loaded.panel.n_units()
        )));
    }
    run_estimate(
        cfg,
        &EstimateInputs {
            panel: &loaded.panel,
            factors: loaded.factors.as_ref(),
            covariates: loaded.covariates.as_deref(),
            units,
            sequences: query_sequences(cfg),
            max_enum,
        },
    )
}

/// Writes `metrics.json`, `queries.csv`, `weights.tsv` and, for the dynamic
/// estimators, `tables.json`.
pub fn write_estimate(
    dir: &Path,
    cfg: &ExperimentConfig,
    loaded: &LoadedPanel,
    outcome: &EstimateOutcome,
) -> Result<(), HarnessError> {
    io::create_dir(dir)?;
    io::write_json(&dir.join("metrics.json"), &outcome.report)?;
    let path = dir.join("queries.csv");
    let file = std::fs::File::create(&path).map_err(|source| IoError::File {
        path: path.clone(),
        source,
    })?;
    outcome
        .report
        .write_rows_csv(file)
        .map_err(|source| IoError::Csv { path, source })?;
    if let Some(tables) = &outcome.tables {
        io::write_json(&dir.join("tables.json"), tables)?;
    }
    io::write_text(&dir.join("weights.tsv"), &baseline_weight_dump(cfg, loaded, outcome)?)?;
    Ok(())
}

/// Weights of the queried units over the donor set behind their horizon-`T`
/// quantity: the control-through-`T` set for the dynamic estimators, the
/// first queried sequence's set for SI.
fn baseline_weight_dump(
    cfg: &ExperimentConfig,
    loaded: &LoadedPanel,
    outcome: &EstimateOutcome,
) -> Result<String, HarnessError> {
    let panel = &loaded.panel;
    let kind = cfg.estimator_kind();
    let index = DonorIndex::new(panel);
    let set = match kind {
        EstimatorKind::Si => match outcome.report.rows.first() {
            Some(row) => index.si(&row.sequence),
            None => return Ok(String::new()),
        },
        _ => index.control_through(panel.horizon()),
    };
    let Ok(set) = set else { return Ok(String::new()) };
    if set.is_empty() {
        return Ok(format!("# {} has no donors\n", set.kind));
    }
    let mut units: Vec<usize> = outcome.report.rows.iter().map(|r| r.unit).collect();
    units.dedup();
    let weights = weights_provider(
        cfg.estimator.weights,
        kind,
        cfg,
        loaded.factors.as_ref(),
        loaded.covariates.as_deref(),
    )?;
    match weights.fit(panel, &set, &units) {
        Ok(w) => Ok(format!("# {}\n{}", set.kind, weight_dump(&set, &w))),
        Err(e) => Ok(format!("# {}: {e}\n", set.kind)),
    }
}

/// Writes the tidy `sweep.csv` and the per-cell `sweep_cells.json`.
pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<(), HarnessError> {
    io::create_dir(dir)?;
    let path = dir.join("sweep.csv");
    let file = std::fs::File::create(&path).map_err(|source| IoError::File {
        path: path.clone(),
        source,
    })?;
    report
        .write_csv(file)
        .map_err(|source| IoError::Csv { path, source })?;
    io::write_json(&dir.join("sweep_cells.json"), &report.cells)?;
    Ok(())
}

/// Ground truth for every unit over all `|A|^T` sequences, refusing when that
/// count exceeds `max_enum`.
pub fn oracle_table(loaded: &LoadedPanel, max_enum: usize) -> Result<OracleTable, HarnessError> {
    let factors = loaded.factors.clone().ok_or_else(|| {
        HarnessError::Usage("the oracle needs the latent factors (factors.json)".into())
    })?;
    let panel = &loaded.panel;
    let oracle = Oracle::new(factors, panel.control().clone());
    Ok(oracle.brute_force_table(panel.horizon(), panel.n_actions(), max_enum)?)
}
