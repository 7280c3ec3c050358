//! Counterfactual estimators: synthetic interventions (SI) and synthetic blips
//! for the LTV and LTI factor models.
//!
//! Each estimator combines donor outcomes through a [`WeightsProvider`]; it
//! does not care whether the weights come from PCR or from known factors.
//! Blip tables hold one [`FittedLevel`] per `(time, action)` (LTV) or
//! `(lag, action)` (LTI) pair. Donor entries are observed values from the
//! blip recursion; every other unit gets the weighted combination of donor
//! entries. Blips of the control action are identically zero and are never
//! stored.

mod lti;
mod ltv;
mod si;

pub use lti::{fit_lti, LtiBlipTable, LtiFit};
pub use ltv::{fit_ltv, LtvBlipTable, LtvFit};
pub use si::{estimate_si, estimate_si_many};

use crate::donors::{DonorError, DonorKind, DonorSet};
use crate::panel::{ActionId, ActionSequence, Panel};
use crate::weights::{WeightsError, WeightsProvider};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("donor deficit: {kind} has {found} donor(s), need at least {required}")]
    DonorDeficit {
        kind: DonorKind,
        found: usize,
        required: usize,
    },
    #[error("donor {unit} needs the outcome at time {time}, beyond the observation horizon {obs_horizon} (lagged blips need outcomes through 2T - 1)")]
    HorizonDeficit {
        unit: usize,
        time: usize,
        obs_horizon: usize,
    },
    #[error("the LTI estimator needs a time-invariant control action")]
    TimeVaryingControl,
    #[error("query sequence has length {len}, expected the target horizon {horizon}")]
    SequenceLength { len: usize, horizon: usize },
    #[error("no fitted entry for unit {unit} at {what}; widen the blip scope")]
    MissingEntry { unit: usize, what: String },
    #[error("unit {unit} outside 0..{n_units}")]
    UnitOutOfRange { unit: usize, n_units: usize },
    #[error("weights for {kind}: {source}")]
    Weights {
        kind: DonorKind,
        #[source]
        source: WeightsError,
    },
    #[error(transparent)]
    Donor(#[from] DonorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// A donor set smaller than this is a deficit.
    pub min_donors: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { min_donors: 1 }
    }
}

impl EstimatorConfig {
    pub fn check(&self, set: &DonorSet) -> Result<(), EstimateError> {
        let required = self.min_donors.max(1);
        if set.len() < required {
            Err(EstimateError::DonorDeficit {
                kind: set.kind.clone(),
                found: set.len(),
                required,
            })
        } else {
            Ok(())
        }
    }
}

/// Which blip entries to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum BlipScope {
    /// Every non-control action at every time (LTV) or lag (LTI).
    Full,
    /// Only the entries these query sequences need, plus whatever the donor
    /// recursion needs to compute those.
    Sequences(Vec<ActionSequence>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EntrySource {
    /// From the unit's own outcomes (it belongs to the donor set).
    Observed,
    /// Weighted combination of donor entries.
    Synthetic { rank: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub value: f64,
    pub source: EntrySource,
}

/// One baseline time or one blip `(time|lag, action)` pair, for every unit
/// that needed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLevel {
    pub kind: DonorKind,
    pub donors: Vec<usize>,
    /// Indexed by unit.
    pub entries: Vec<Option<Entry>>,
}

impl FittedLevel {
    pub fn value(&self, n: usize) -> Option<f64> {
        self.entries.get(n).copied().flatten().map(|e| e.value)
    }

    pub fn entry(&self, n: usize) -> Option<Entry> {
        self.entries.get(n).copied().flatten()
    }
}

/// Observed entries for the donors, then synthetic entries for `targets`
/// (donors among `targets` are skipped).
pub(crate) fn fill_level(
    panel: &Panel,
    weights: &dyn WeightsProvider,
    set: &DonorSet,
    targets: &[usize],
    mut observed: impl FnMut(usize) -> Result<f64, EstimateError>,
) -> Result<FittedLevel, EstimateError> {
    let mut entries = vec![None; panel.n_units()];
    let mut donor_values = Vec::with_capacity(set.len());
    for &j in &set.members {
        let value = observed(j)?;
        donor_values.push(value);
        entries[j] = Some(Entry {
            value,
            source: EntrySource::Observed,
        });
    }
    let synth: Vec<usize> = targets
        .iter()
        .copied()
        .filter(|&n| entries[n].is_none())
        .collect();
    if !synth.is_empty() {
        let fitted = weights
            .fit(panel, set, &synth)
            .map_err(|source| EstimateError::Weights {
                kind: set.kind.clone(),
                source,
            })?;
        for w in fitted {
            let value = w.beta.iter().zip(&donor_values).map(|(b, v)| b * v).sum();
            entries[w.target] = Some(Entry {
                value,
                source: EntrySource::Synthetic {
                    rank: w.rank,
                    residual: w.residual,
                },
            });
        }
    }
    Ok(FittedLevel {
        kind: set.kind.clone(),
        donors: set.members.clone(),
        entries,
    })
}

/// Baselines `b̂[n, t]` for the times an estimator needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTable {
    /// Indexed by `t - 1`, up to the observation horizon.
    pub levels: Vec<Option<FittedLevel>>,
}

impl BaselineTable {
    pub fn value(&self, n: usize, t: usize) -> Option<f64> {
        self.levels.get(t.checked_sub(1)?)?.as_ref()?.value(n)
    }

    pub fn level(&self, t: usize) -> Option<&FittedLevel> {
        self.levels.get(t.checked_sub(1)?)?.as_ref()
    }

    pub(crate) fn require(&self, n: usize, t: usize) -> Result<f64, EstimateError> {
        self.value(n, t).ok_or_else(|| EstimateError::MissingEntry {
            unit: n,
            what: format!("baseline time {t}"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum TermLabel {
    /// The single weighted donor outcome of SI.
    Synthetic,
    Baseline { time: usize },
    Blip { time: usize, action: ActionId },
    LagBlip { lag: usize, action: ActionId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TermSource {
    /// Control-action blip, zero by definition.
    PinnedControl,
    Observed { kind: DonorKind },
    Synthetic {
        kind: DonorKind,
        n_donors: usize,
        rank: usize,
        residual: f64,
    },
}

impl TermSource {
    pub(crate) fn from_entry(level: &FittedLevel, entry: Entry) -> Self {
        match entry.source {
            EntrySource::Observed => TermSource::Observed {
                kind: level.kind.clone(),
            },
            EntrySource::Synthetic { rank, residual } => TermSource::Synthetic {
                kind: level.kind.clone(),
                n_donors: level.donors.len(),
                rank,
                residual,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: TermLabel,
    pub value: f64,
    pub source: TermSource,
}

/// An estimate and its additive decomposition. `value` is the left-to-right
/// sum of the term values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualEstimate {
    pub unit: usize,
    pub sequence: ActionSequence,
    pub value: f64,
    pub terms: Vec<Term>,
}

impl CounterfactualEstimate {
    pub(crate) fn from_terms(unit: usize, sequence: ActionSequence, terms: Vec<Term>) -> Self {
        let value = sum_terms(&terms);
        CounterfactualEstimate {
            unit,
            sequence,
            value,
            terms,
        }
    }

    /// Whether `value` equals the sum of the decomposition.
    pub fn is_consistent(&self) -> bool {
        sum_terms(&self.terms) == self.value
    }

    pub fn baseline(&self) -> Option<f64> {
        self.terms
            .iter()
            .find(|t| matches!(t.label, TermLabel::Baseline { .. }))
            .map(|t| t.value)
    }
}

fn sum_terms(terms: &[Term]) -> f64 {
    terms.iter().fold(0.0, |acc, t| acc + t.value)
}

/// Outcome of re-checking the blip recursion on every donor entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub checked: usize,
    /// `(unit, description, residual)` for every nonzero residual.
    pub violations: Vec<(usize, String, f64)>,
}

impl ConservationReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn record(&mut self, unit: usize, what: impl FnOnce() -> String, residual: f64) {
        self.checked += 1;
        if residual != 0.0 {
            self.violations.push((unit, what(), residual));
        }
    }
}

pub(crate) fn check_unit(panel: &Panel, n: usize) -> Result<(), EstimateError> {
    if n >= panel.n_units() {
        Err(EstimateError::UnitOutOfRange {
            unit: n,
            n_units: panel.n_units(),
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_length(seq: &ActionSequence, horizon: usize) -> Result<(), EstimateError> {
    if seq.len() != horizon {
        Err(EstimateError::SequenceLength {
            len: seq.len(),
            horizon,
        })
    } else {
        Ok(())
    }
}
