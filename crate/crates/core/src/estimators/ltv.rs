use super::{
    check_length, check_unit, fill_level, BaselineTable, BlipScope, ConservationReport,
    CounterfactualEstimate, EstimateError, EstimatorConfig, FittedLevel, Term, TermLabel,
    TermSource,
};
use crate::donors::{DonorIndex, DonorSet};
use crate::panel::{ActionId, ActionSequence, ControlSchedule, Panel};
use crate::weights::WeightsProvider;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// `γ̂[n][t][a]` for the target horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtvBlipTable {
    pub horizon: usize,
    pub control: ControlSchedule,
    /// Indexed `[t - 1][a]`; `None` for control actions and unfitted pairs.
    pub levels: Vec<Vec<Option<FittedLevel>>>,
}

impl LtvBlipTable {
    pub fn level(&self, t: usize, a: ActionId) -> Option<&FittedLevel> {
        self.levels.get(t.checked_sub(1)?)?.get(a.0)?.as_ref()
    }

    /// `γ̂[n][t][a]`; zero for the control action at `t`.
    pub fn value(&self, n: usize, t: usize, a: ActionId) -> Option<f64> {
        if self.control.is_control(t, a) {
            return Some(0.0);
        }
        self.level(t, a)?.value(n)
    }

    fn require(&self, n: usize, t: usize, a: ActionId) -> Result<f64, EstimateError> {
        self.value(n, t, a).ok_or_else(|| EstimateError::MissingEntry {
            unit: n,
            what: format!("blip (t={t}, a={a})"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtvFit {
    pub baselines: BaselineTable,
    pub blips: LtvBlipTable,
}

/// `Σ_{l=t+1}^{T} γ̂[j][l][A[j,l]]`, accumulated in ascending `l`.
fn later_blips(
    panel: &Panel,
    blips: &LtvBlipTable,
    j: usize,
    t: usize,
) -> Result<f64, EstimateError> {
    let mut s = 0.0;
    for l in t + 1..=blips.horizon {
        s += blips.require(j, l, panel.action(j, l))?;
    }
    Ok(s)
}

/// Observed blip of donor `j` at `t`: `Y[j,T] − b̂[j,T] − Σ_{l>t} γ̂[j][l][A[j,l]]`.
fn observed_blip(
    panel: &Panel,
    baselines: &BaselineTable,
    blips: &LtvBlipTable,
    j: usize,
    t: usize,
) -> Result<f64, EstimateError> {
    let horizon = blips.horizon;
    let y = panel.outcome(j, horizon);
    let b = baselines.require(j, horizon)?;
    Ok((y - b) - later_blips(panel, blips, j, t)?)
}

/// Fits the LTV baselines at `T` and the blip table by backward recursion
/// over `t = T, ..., 1`.
pub fn fit_ltv(
    panel: &Panel,
    weights: &dyn WeightsProvider,
    cfg: &EstimatorConfig,
    scope: &BlipScope,
) -> Result<LtvFit, EstimateError> {
    let horizon = panel.horizon();
    let n_units = panel.n_units();
    let control = panel.control();
    let index = DonorIndex::new(panel);
    let all_units: Vec<usize> = (0..n_units).collect();

    let base_set = index.control_through(horizon)?;
    cfg.check(&base_set)?;

    // Required (t, a) pairs. Donors at t pull in their own later actions, so
    // one ascending pass closes the set.
    let mut required: Vec<BTreeSet<ActionId>> = vec![BTreeSet::new(); horizon];
    match scope {
        BlipScope::Full => {
            for t in 1..=horizon {
                for a in (0..panel.n_actions()).map(ActionId) {
                    if !control.is_control(t, a) {
                        required[t - 1].insert(a);
                    }
                }
            }
        }
        BlipScope::Sequences(seqs) => {
            for seq in seqs {
                check_length(seq, horizon)?;
                for t in 1..=horizon {
                    let a = seq.at(t);
                    if !control.is_control(t, a) {
                        required[t - 1].insert(a);
                    }
                }
            }
        }
    }
    let mut sets: Vec<Vec<(ActionId, DonorSet)>> = vec![Vec::new(); horizon];
    for t in 1..=horizon {
        let actions: Vec<ActionId> = required[t - 1].iter().copied().collect();
        for a in actions {
            let set = index.ltv_action(a, t)?;
            cfg.check(&set)?;
            for &j in &set.members {
                for l in t + 1..=horizon {
                    let later = panel.action(j, l);
                    if !control.is_control(l, later) {
                        required[l - 1].insert(later);
                    }
                }
            }
            sets[t - 1].push((a, set));
        }
    }

    let mut baselines = BaselineTable {
        levels: vec![None; panel.obs_horizon()],
    };
    baselines.levels[horizon - 1] = Some(fill_level(panel, weights, &base_set, &all_units, |j| {
        Ok(panel.outcome(j, horizon))
    })?);

    let mut blips = LtvBlipTable {
        horizon,
        control: control.clone(),
        levels: vec![vec![None; panel.n_actions()]; horizon],
    };
    let mut last_done = horizon + 1;
    for t in (1..=horizon).rev() {
        debug_assert!(t < last_done, "blip levels must be fitted in descending time");
        for (a, set) in std::mem::take(&mut sets[t - 1]) {
            #[cfg(debug_assertions)]
            for &j in &set.members {
                for l in t + 1..=horizon {
                    let later = panel.action(j, l);
                    debug_assert!(
                        control.is_control(l, later) || blips.level(l, later).is_some(),
                        "blip (t={l}, a={later}) needed before (t={t}, a={a})"
                    );
                }
            }
            let level = fill_level(panel, weights, &set, &all_units, |j| {
                observed_blip(panel, &baselines, &blips, j, t)
            })?;
            blips.levels[t - 1][a.0] = Some(level);
        }
        last_done = t;
    }
    Ok(LtvFit { baselines, blips })
}

impl LtvFit {
    pub fn horizon(&self) -> usize {
        self.blips.horizon
    }

    /// `b̂[n,T] + Σ_t γ̂[n][t][a_t]`.
    pub fn estimate(
        &self,
        n: usize,
        sequence: &ActionSequence,
    ) -> Result<CounterfactualEstimate, EstimateError> {
        let horizon = self.horizon();
        check_length(sequence, horizon)?;
        if n >= self.blips_units() {
            return Err(EstimateError::UnitOutOfRange {
                unit: n,
                n_units: self.blips_units(),
            });
        }
        let base_level = self
            .baselines
            .level(horizon)
            .expect("baseline at the target horizon is always fitted");
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
            let label = TermLabel::Blip { time: t, action: a };
            if self.blips.control.is_control(t, a) {
                terms.push(Term {
                    label,
                    value: 0.0,
                    source: TermSource::PinnedControl,
                });
                continue;
            }
            let missing = || EstimateError::MissingEntry {
                unit: n,
                what: format!("blip (t={t}, a={a})"),
            };
            let level = self.blips.level(t, a).ok_or_else(missing)?;
            let entry = level.entry(n).ok_or_else(missing)?;
            terms.push(Term {
                label,
                value: entry.value,
                source: TermSource::from_entry(level, entry),
            });
        }
        Ok(CounterfactualEstimate::from_terms(n, sequence.clone(), terms))
    }

    fn blips_units(&self) -> usize {
        self.baselines
            .level(self.horizon())
            .map_or(0, |l| l.entries.len())
    }

    /// Re-derives every donor entry from the panel and compares it with the
    /// stored value; the recursion is replayed in the order it was built, so
    /// any nonzero residual is a defect.
    pub fn check_conservation(&self, panel: &Panel) -> Result<ConservationReport, EstimateError> {
        check_unit(panel, self.blips_units().saturating_sub(1))?;
        let horizon = self.horizon();
        let mut report = ConservationReport::default();
        let base = self.baselines.level(horizon).expect("baseline level");
        for &j in &base.donors {
            let r = panel.outcome(j, horizon) - self.baselines.require(j, horizon)?;
            report.record(j, || format!("observed baseline t={horizon}"), r);
        }
        for t in 1..=horizon {
            for level in self.blips.levels[t - 1].iter().flatten() {
                for &j in &level.donors {
                    let a = panel.action(j, t);
                    let stored = self.blips.require(j, t, a)?;
                    let r = observed_blip(panel, &self.baselines, &self.blips, j, t)? - stored;
                    report.record(j, || format!("blip t={t} a={a}"), r);
                }
            }
        }
        Ok(report)
    }
}
