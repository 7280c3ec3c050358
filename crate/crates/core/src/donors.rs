//! Donor sets: units whose observed action prefix matches a pattern and whose
//! assignment is declared exogenous over that prefix.
//!
//! Exogeneity is read from `Panel::exogenous_until` and never inferred from
//! outcomes. Never-treated units belong to every control set and to no action
//! set.

use crate::panel::{ActionId, ActionSequence, Panel};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DonorError {
    #[error("per-action donor sets across periods need a time-invariant control action")]
    TimeVaryingControl,
    #[error("time {t} outside 1..={max}")]
    TimeOutOfRange { t: usize, max: usize },
    #[error("sequence of length {len} cannot be observed in a panel of {obs_horizon} periods")]
    SequenceLength { len: usize, obs_horizon: usize },
    #[error("unit {unit} does not satisfy the pattern of {kind}")]
    Membership { unit: usize, kind: DonorKind },
}

/// The defining pattern of a donor set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DonorKind {
    /// Units that received exactly `sequence`, exogenously throughout.
    Si { sequence: ActionSequence },
    /// Units in control through `time - 1` that take `action` at `time`.
    LtvAction { action: ActionId, time: usize },
    /// Units in control through `time`.
    ControlThrough { time: usize },
    /// Units whose first non-control action is `action`, at any period up to
    /// the target horizon. With `first_period_only`, only units deviating at
    /// period 1.
    LtiAction {
        action: ActionId,
        first_period_only: bool,
    },
}

impl fmt::Display for DonorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DonorKind::Si { sequence } => write!(f, "si({sequence})"),
            DonorKind::LtvAction { action, time } => write!(f, "ltv_action(a={action}, t={time})"),
            DonorKind::ControlThrough { time } => write!(f, "control_through(t={time})"),
            DonorKind::LtiAction {
                action,
                first_period_only: false,
            } => write!(f, "lti_action(a={action})"),
            DonorKind::LtiAction {
                action,
                first_period_only: true,
            } => write!(f, "lti_action(a={action}, t*=1)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonorSet {
    pub kind: DonorKind,
    /// Sorted unit indices.
    pub members: Vec<usize>,
}

impl DonorSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, unit: usize) -> bool {
        self.members.binary_search(&unit).is_ok()
    }

    /// Line-oriented listing: the kind, then one member index per line.
    pub fn listing(&self) -> String {
        let mut out = format!("# {} ({} members)\n", self.kind, self.members.len());
        for m in &self.members {
            out.push_str(&m.to_string());
            out.push('\n');
        }
        out
    }

    /// Re-checks every member against the kind's pattern and exogeneity rule.
    pub fn verify(&self, panel: &Panel) -> Result<(), DonorError> {
        let index = DonorIndex::new(panel);
        for &unit in &self.members {
            if !index.admits(&self.kind, unit) {
                return Err(DonorError::Membership {
                    unit,
                    kind: self.kind.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Donor-set queries over one panel, with first deviation times precomputed.
#[derive(Debug, Clone)]
pub struct DonorIndex<'a> {
    panel: &'a Panel,
    first_deviation: Vec<Option<usize>>,
}

impl<'a> DonorIndex<'a> {
    pub fn new(panel: &'a Panel) -> Self {
        let first_deviation = (0..panel.n_units())
            .map(|n| panel.first_deviation_time(n))
            .collect();
        DonorIndex {
            panel,
            first_deviation,
        }
    }

    pub fn panel(&self) -> &'a Panel {
        self.panel
    }

    /// `t*_n`, if unit `n` ever leaves the control schedule.
    pub fn first_deviation(&self, n: usize) -> Option<usize> {
        self.first_deviation[n]
    }

    fn in_control(&self, n: usize, t: usize) -> bool {
        self.first_deviation[n].is_none_or(|d| d > t)
    }

    fn admits(&self, kind: &DonorKind, j: usize) -> bool {
        let p = self.panel;
        match kind {
            DonorKind::Si { sequence } => {
                let t = sequence.len();
                t <= p.obs_horizon()
                    && p.exogenous_until(j) >= t
                    && &p.actions(j)[..t] == sequence.as_slice()
            }
            DonorKind::LtvAction { action, time } => {
                *time >= 1
                    && *time <= p.obs_horizon()
                    && p.exogenous_until(j) >= *time
                    && self.in_control(j, time - 1)
                    && p.action(j, *time) == *action
            }
            DonorKind::ControlThrough { time } => {
                *time <= p.obs_horizon()
                    && p.exogenous_until(j) >= *time
                    && self.in_control(j, *time)
            }
            DonorKind::LtiAction {
                action,
                first_period_only,
            } => match self.first_deviation[j] {
                Some(ts) => {
                    ts <= p.horizon()
                        && (!first_period_only || ts == 1)
                        && p.exogenous_until(j) >= ts
                        && p.action(j, ts) == *action
                }
                None => false,
            },
        }
    }

    fn collect(&self, kind: DonorKind) -> DonorSet {
        let members = (0..self.panel.n_units())
            .filter(|&j| self.admits(&kind, j))
            .collect();
        DonorSet { kind, members }
    }

    /// Units that received exactly `sequence` and are exogenous through its
    /// length.
    pub fn si(&self, sequence: &ActionSequence) -> Result<DonorSet, DonorError> {
        if sequence.len() > self.panel.obs_horizon() {
            return Err(DonorError::SequenceLength {
                len: sequence.len(),
                obs_horizon: self.panel.obs_horizon(),
            });
        }
        Ok(self.collect(DonorKind::Si {
            sequence: sequence.clone(),
        }))
    }

    /// Units in control through `t - 1` that take `a` at `t`, exogenous
    /// through `t`. For `a = 0_t` this coincides with
    /// [`control_through`](Self::control_through)`(t)`.
    pub fn ltv_action(&self, a: ActionId, t: usize) -> Result<DonorSet, DonorError> {
        self.check_time(t)?;
        Ok(self.collect(DonorKind::LtvAction { action: a, time: t }))
    }

    /// Units in control through `t`, exogenous through `t`.
    pub fn control_through(&self, t: usize) -> Result<DonorSet, DonorError> {
        self.check_time(t)?;
        Ok(self.collect(DonorKind::ControlThrough { time: t }))
    }

    /// Units whose first non-control action is `a`, taken at some
    /// `t* <= horizon`, exogenous through `t*`.
    pub fn lti_action(&self, a: ActionId, first_period_only: bool) -> Result<DonorSet, DonorError> {
        if !self.panel.control().is_time_invariant() {
            return Err(DonorError::TimeVaryingControl);
        }
        Ok(self.collect(DonorKind::LtiAction {
            action: a,
            first_period_only,
        }))
    }

    /// Materializes any kind.
    pub fn set(&self, kind: &DonorKind) -> Result<DonorSet, DonorError> {
        match kind {
            DonorKind::Si { sequence } => self.si(sequence),
            DonorKind::LtvAction { action, time } => self.ltv_action(*action, *time),
            DonorKind::ControlThrough { time } => self.control_through(*time),
            DonorKind::LtiAction {
                action,
                first_period_only,
            } => self.lti_action(*action, *first_period_only),
        }
    }

    fn check_time(&self, t: usize) -> Result<(), DonorError> {
        if t == 0 || t > self.panel.obs_horizon() {
            Err(DonorError::TimeOutOfRange {
                t,
                max: self.panel.obs_horizon(),
            })
        } else {
            Ok(())
        }
    }
}

pub fn si_donors(panel: &Panel, sequence: &ActionSequence) -> Result<DonorSet, DonorError> {
    DonorIndex::new(panel).si(sequence)
}

pub fn ltv_action_donors(panel: &Panel, a: ActionId, t: usize) -> Result<DonorSet, DonorError> {
    DonorIndex::new(panel).ltv_action(a, t)
}

pub fn control_donors(panel: &Panel, t: usize) -> Result<DonorSet, DonorError> {
    DonorIndex::new(panel).control_through(t)
}

pub fn lti_action_donors(
    panel: &Panel,
    a: ActionId,
    first_period_only: bool,
) -> Result<DonorSet, DonorError> {
    DonorIndex::new(panel).lti_action(a, first_period_only)
}
