use super::{
    check_length, fill_level, BaselineTable, BlipScope, ConservationReport, CounterfactualEstimate,
    EstimateError, EstimatorConfig, FittedLevel, Term, TermLabel, TermSource,
};
use crate::donors::{DonorIndex, DonorSet};
use crate::panel::{ActionId, ActionSequence, Panel};
use crate::weights::WeightsProvider;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// `γ̂[n][k][a]` for lags `0 <= k < T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiBlipTable {
    pub horizon: usize,
    pub control: ActionId,
    /// Indexed `[k][a]`; `None` for the control action and unfitted pairs.
    pub levels: Vec<Vec<Option<FittedLevel>>>,
}

impl LtiBlipTable {
    pub fn level(&self, lag: usize, a: ActionId) -> Option<&FittedLevel> {
        self.levels.get(lag)?.get(a.0)?.as_ref()
    }

    pub fn value(&self, n: usize, lag: usize, a: ActionId) -> Option<f64> {
        if a == self.control {
            return Some(0.0);
        }
        self.level(lag, a)?.value(n)
    }

    fn require(&self, n: usize, lag: usize, a: ActionId) -> Result<f64, EstimateError> {
        self.value(n, lag, a).ok_or_else(|| EstimateError::MissingEntry {
            unit: n,
            what: format!("blip (lag={lag}, a={a})"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiFit {
    pub baselines: BaselineTable,
    pub blips: LtiBlipTable,
    /// `t*_j` of every unit that served as an action donor.
    pub first_deviation: BTreeMap<usize, usize>,
}

/// Observed lag-`k` blip of a donor deviating at `ts`:
/// `Y[j,s] − b̂[j,s] − Σ_{q<k} γ̂[j][q][A[j,s−q]]` with `s = ts + k`.
fn observed_blip(
    panel: &Panel,
    baselines: &BaselineTable,
    blips: &LtiBlipTable,
    j: usize,
    ts: usize,
    k: usize,
) -> Result<f64, EstimateError> {
    let s = ts + k;
    let y = panel.outcome(j, s);
    let b = baselines.require(j, s)?;
    let mut inner = 0.0;
    for q in 0..k {
        inner += blips.require(j, q, panel.action(j, s - q))?;
    }
    Ok((y - b) - inner)
}

/// Fits baselines at every needed time and the lag blip table by forward
/// recursion over `k = 0, ..., T − 1`.
pub fn fit_lti(
    panel: &Panel,
    weights: &dyn WeightsProvider,
    cfg: &EstimatorConfig,
    scope: &BlipScope,
) -> Result<LtiFit, EstimateError> {
    let horizon = panel.horizon();
    let obs = panel.obs_horizon();
    let n_units = panel.n_units();
    let control = panel
        .control()
        .invariant_action()
        .ok_or(EstimateError::TimeVaryingControl)?;
    let index = DonorIndex::new(panel);
    let non_control = || (0..panel.n_actions()).map(ActionId).filter(move |&a| a != control);

    let mut required: Vec<BTreeSet<ActionId>> = vec![BTreeSet::new(); horizon];
    match scope {
        BlipScope::Full => {
            for k in 0..horizon {
                required[k].extend(non_control());
            }
        }
        BlipScope::Sequences(seqs) => {
            for seq in seqs {
                check_length(seq, horizon)?;
                for t in 1..=horizon {
                    let a = seq.at(t);
                    if a != control {
                        required[horizon - t].insert(a);
                    }
                }
            }
        }
    }

    // Donors at lag k pull in lags below k, so one descending pass closes the
    // requirement set.
    let mut action_sets: BTreeMap<ActionId, DonorSet> = BTreeMap::new();
    let mut first_deviation = BTreeMap::new();
    // Baseline targets per time: every unit at T, donors at t*_j + k.
    let mut baseline_targets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); obs];
    baseline_targets[horizon - 1].extend(0..n_units);
    for k in (0..horizon).rev() {
        let actions: Vec<ActionId> = required[k].iter().copied().collect();
        for a in actions {
            if !action_sets.contains_key(&a) {
                let set = index.lti_action(a, false)?;
                cfg.check(&set)?;
                action_sets.insert(a, set);
            }
            for &j in &action_sets[&a].members {
                let ts = index.first_deviation(j).expect("action donors deviate");
                first_deviation.insert(j, ts);
                let s = ts + k;
                if s > obs {
                    return Err(EstimateError::HorizonDeficit {
                        unit: j,
                        time: s,
                        obs_horizon: obs,
                    });
                }
                baseline_targets[s - 1].insert(j);
                for q in 0..k {
                    let inner = panel.action(j, s - q);
                    if inner != control {
                        required[q].insert(inner);
                    }
                }
            }
        }
    }

    let mut baselines = BaselineTable {
        levels: vec![None; obs],
    };
    for t in 1..=obs {
        let targets: Vec<usize> = baseline_targets[t - 1].iter().copied().collect();
        if targets.is_empty() {
            continue;
        }
        let set = index.control_through(t)?;
        cfg.check(&set)?;
        baselines.levels[t - 1] = Some(fill_level(panel, weights, &set, &targets, |j| {
            Ok(panel.outcome(j, t))
        })?);
    }

    let all_units: Vec<usize> = (0..n_units).collect();
    let mut blips = LtiBlipTable {
        horizon,
        control,
        levels: vec![vec![None; panel.n_actions()]; horizon],
    };
    for k in 0..horizon {
        for &a in &required[k] {
            let set = &action_sets[&a];
            #[cfg(debug_assertions)]
            for &j in &set.members {
                let s = first_deviation[&j] + k;
                for q in 0..k {
                    let inner = panel.action(j, s - q);
                    debug_assert!(
                        inner == control || blips.level(q, inner).is_some(),
                        "blip (lag={q}, a={inner}) needed before (lag={k}, a={a})"
                    );
                }
            }
            let level = fill_level(panel, weights, set, &all_units, |j| {
                observed_blip(panel, &baselines, &blips, j, first_deviation[&j], k)
            })?;
            blips.levels[k][a.0] = Some(level);
        }
    }
    Ok(LtiFit {
        baselines,
        blips,
        first_deviation,
    })
}

impl LtiFit {
    pub fn horizon(&self) -> usize {
        self.blips.horizon
    }

    /// `b̂[n,T] + Σ_t γ̂[n][T−t][a_t]`.
    pub fn estimate(
        &self,
        n: usize,
        sequence: &ActionSequence,
    ) -> Result<CounterfactualEstimate, EstimateError> {
        let horizon = self.horizon();
        check_length(sequence, horizon)?;
        let base_level = self
            .baselines
            .level(horizon)
            .expect("baseline at the target horizon is always fitted");
        if n >= base_level.entries.len() {
            return Err(EstimateError::UnitOutOfRange {
                unit: n,
                n_units: base_level.entries.len(),
            });
        }
        let base = base_level.entry(n).ok_or_else(|| EstimateError::MissingEntry {
            unit: n,
            what: format!("baseline time {horizon}"),
        })?;
        let mut terms = Vec::with_capacity(horizon + 1);
        terms.push(Term {
            label: TermLabel::Baseline { time: horizon },
            value: base.value,
            source: TermSource::from_entry(base_level, base),
        });
        for t in 1..=horizon {
            let a = sequence.at(t);
            let lag = horizon - t;
            let label = TermLabel::LagBlip { lag, action: a };
            if a == self.blips.control {
                terms.push(Term {
                    label,
                    value: 0.0,
                    source: TermSource::PinnedControl,
                });
                continue;
            }
            let missing = || EstimateError::MissingEntry {
                unit: n,
                what: format!("blip (lag={lag}, a={a})"),
            };
            let level = self.blips.level(lag, a).ok_or_else(missing)?;
            let entry = level.entry(n).ok_or_else(missing)?;
            terms.push(Term {
                label,
                value: entry.value,
                source: TermSource::from_entry(level, entry),
            });
        }
        Ok(CounterfactualEstimate::from_terms(n, sequence.clone(), terms))
    }

    /// Replays the observed baseline and blip recursions for every donor and
    /// compares with the stored entries.
    pub fn check_conservation(&self, panel: &Panel) -> Result<ConservationReport, EstimateError> {
        let mut report = ConservationReport::default();
        for (i, level) in self.baselines.levels.iter().enumerate() {
            let Some(level) = level else { continue };
            let t = i + 1;
            for &j in &level.donors {
                let r = panel.outcome(j, t) - self.baselines.require(j, t)?;
                report.record(j, || format!("observed baseline t={t}"), r);
            }
        }
        for (k, per_action) in self.blips.levels.iter().enumerate() {
            for level in per_action.iter().flatten() {
                for &j in &level.donors {
                    let ts = self.first_deviation[&j];
                    let a = panel.action(j, ts);
                    let stored = self.blips.require(j, k, a)?;
                    let r = observed_blip(panel, &self.baselines, &self.blips, j, ts, k)? - stored;
                    report.record(j, || format!("blip lag={k} a={a}"), r);
                }
            }
        }
        Ok(report)
    }
}
