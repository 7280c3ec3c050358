//! Panels of outcomes and categorical actions.
//!
//! A [`Panel`] holds `N` units observed over `T_obs` periods: a real outcome
//! and a categorical action per cell, the control schedule that every unit
//! follows until it first deviates, and per-unit exogeneity metadata.
//!
//! Time is 1-indexed in every public signature: `t` ranges over
//! `1..=obs_horizon`. Storage is 0-indexed.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Identifier of one categorical action, in `0..n_actions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for ActionId {
    fn from(value: usize) -> Self {
        ActionId(value)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("action sequences must contain at least one action")]
    EmptySequence,
    #[error("cannot parse action sequence `{0}`")]
    ParseSequence(String),
    #[error("time {t} outside 1..={max}")]
    TimeOutOfRange { t: usize, max: usize },
    #[error("unit {unit} outside 0..{n_units}")]
    UnitOutOfRange { unit: usize, n_units: usize },
}

/// The control action at each period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSchedule {
    /// One control action per observed period; `0_t` may change with `t`.
    TimeVarying(Vec<ActionId>),
    /// A single control action for every period. Required by the LTI estimator.
    TimeInvariant(ActionId),
}

impl ControlSchedule {
    /// Control action at period `t` (1-indexed).
    ///
    /// Panics if a time-varying schedule is shorter than `t`; validated panels
    /// never trigger this.
    pub fn at(&self, t: usize) -> ActionId {
        match self {
            ControlSchedule::TimeVarying(actions) => actions[t - 1],
            ControlSchedule::TimeInvariant(a) => *a,
        }
    }

    pub fn invariant_action(&self) -> Option<ActionId> {
        match self {
            ControlSchedule::TimeInvariant(a) => Some(*a),
            ControlSchedule::TimeVarying(_) => None,
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self, ControlSchedule::TimeInvariant(_))
    }

    /// Whether `a` is the control action at period `t`.
    #[inline]
    pub fn is_control(&self, t: usize, a: ActionId) -> bool {
        self.at(t) == a
    }

    /// The all-control sequence `(0_1, ..., 0_t)`.
    pub fn prefix(&self, t: usize) -> ActionSequence {
        ActionSequence((1..=t).map(|s| self.at(s)).collect())
    }
}

/// A non-empty sequence of actions `(a_1, ..., a_t)`.
///
/// Text form is dash-joined action indices, e.g. `0-2-1`; that is also the
/// serde representation so sequences can key JSON maps.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionSequence(Vec<ActionId>);

impl ActionSequence {
    pub fn new(actions: Vec<ActionId>) -> Result<Self, PanelError> {
        if actions.is_empty() {
            return Err(PanelError::EmptySequence);
        }
        Ok(ActionSequence(actions))
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self, PanelError> {
        Self::new(indices.iter().copied().map(ActionId).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[ActionId] {
        &self.0
    }

    /// Action at period `t` (1-indexed).
    #[inline]
    pub fn at(&self, t: usize) -> ActionId {
        self.0[t - 1]
    }

    /// The first `t` actions.
    pub fn prefix(&self, t: usize) -> ActionSequence {
        ActionSequence(self.0[..t].to_vec())
    }

    pub fn is_prefix_of(&self, other: &ActionSequence) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    pub fn iter(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.0.iter().copied()
    }

    pub fn into_inner(self) -> Vec<ActionId> {
        self.0
    }
}

impl fmt::Display for ActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{}", a.0)?;
        }
        Ok(())
    }
}

impl FromStr for ActionSequence {
    type Err = PanelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let actions = s
            .trim()
            .split('-')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map(ActionId)
                    .map_err(|_| PanelError::ParseSequence(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ActionSequence::new(actions)
    }
}

impl Serialize for ActionSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Raw panel contents. Build a [`Panel`] from it with [`Panel::new`] (checked)
/// or [`Panel::from_parts_unchecked`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelParts {
    pub n_actions: usize,
    /// Target horizon `T`.
    pub horizon: usize,
    /// Observation horizon `T_obs`, `T <= T_obs <= 2T - 1`.
    pub obs_horizon: usize,
    /// `N x T_obs` outcomes.
    pub outcomes: Vec<Vec<f64>>,
    /// `N x T_obs` actions.
    pub actions: Vec<Vec<ActionId>>,
    pub control: ControlSchedule,
    /// Last period through which each unit's actions are declared non-adaptive.
    pub exogenous_until: Vec<usize>,
    /// Optional declared start of each unit's treatment period. When present,
    /// every earlier action must be the control action.
    pub declared_deviation: Vec<Option<usize>>,
}

/// Balanced panel of outcomes and actions. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    parts: PanelParts,
}

/// One broken panel invariant, with coordinates where applicable.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("horizon: {0}")]
    Horizon(String),
    #[error("action {action} at (unit {unit}, time {time}) outside 0..{n_actions}")]
    ActionOutOfRange {
        unit: usize,
        time: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("unit {unit} declared in control before time {declared} but takes {action} != control at time {time}")]
    ControlPeriod {
        unit: usize,
        time: usize,
        declared: usize,
        action: usize,
    },
    #[error("unit {unit}: exogenous_until = {value} exceeds observation horizon {obs_horizon}")]
    Exogeneity {
        unit: usize,
        value: usize,
        obs_horizon: usize,
    },
    #[error("non-finite outcome at (unit {unit}, time {time})")]
    NonFinite { unit: usize, time: usize },
}

/// Every violation found by [`validate_panel`].
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} panel violation(s); first: {}", .violations.len(), .violations[0])]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

/// Checks every panel invariant and reports all violations at once.
pub fn validate_panel(panel: &Panel) -> Result<(), ValidationReport> {
    let p = &panel.parts;
    let mut v = Vec::new();
    let n = p.outcomes.len();

    if p.horizon == 0 {
        v.push(Violation::Horizon("target horizon must be at least 1".into()));
    }
    if p.obs_horizon < p.horizon || p.obs_horizon + 1 > 2 * p.horizon.max(1) {
        v.push(Violation::Horizon(format!(
            "observation horizon {} outside [{}, {}]",
            p.obs_horizon,
            p.horizon,
            (2 * p.horizon).saturating_sub(1)
        )));
    }
    if p.n_actions == 0 {
        v.push(Violation::Shape("action count must be at least 1".into()));
    }
    if p.actions.len() != n {
        v.push(Violation::Shape(format!(
            "{} outcome rows but {} action rows",
            n,
            p.actions.len()
        )));
    }
    if p.exogenous_until.len() != n {
        v.push(Violation::Shape(format!(
            "{} units but {} exogenous_until entries",
            n,
            p.exogenous_until.len()
        )));
    }
    if p.declared_deviation.len() != n {
        v.push(Violation::Shape(format!(
            "{} units but {} declared_deviation entries",
            n,
            p.declared_deviation.len()
        )));
    }
    let control_ok = match &p.control {
        ControlSchedule::TimeVarying(actions) => {
            let mut ok = true;
            if actions.len() != p.obs_horizon {
                v.push(Violation::Shape(format!(
                    "control schedule has {} entries, observation horizon is {}",
                    actions.len(),
                    p.obs_horizon
                )));
                ok = false;
            }
            for (i, a) in actions.iter().enumerate() {
                if a.0 >= p.n_actions {
                    v.push(Violation::Shape(format!(
                        "control action {} at time {} outside 0..{}",
                        a.0,
                        i + 1,
                        p.n_actions
                    )));
                    ok = false;
                }
            }
            ok
        }
        ControlSchedule::TimeInvariant(a) => {
            if a.0 >= p.n_actions {
                v.push(Violation::Shape(format!(
                    "control action {} outside 0..{}",
                    a.0, p.n_actions
                )));
                false
            } else {
                true
            }
        }
    };

    for unit in 0..n {
        let y = &p.outcomes[unit];
        if y.len() != p.obs_horizon {
            v.push(Violation::Shape(format!(
                "unit {unit} has {} outcomes, expected {}",
                y.len(),
                p.obs_horizon
            )));
        }
        for (i, val) in y.iter().enumerate() {
            if !val.is_finite() {
                v.push(Violation::NonFinite { unit, time: i + 1 });
            }
        }
        let Some(acts) = p.actions.get(unit) else {
            continue;
        };
        if acts.len() != p.obs_horizon {
            v.push(Violation::Shape(format!(
                "unit {unit} has {} actions, expected {}",
                acts.len(),
                p.obs_horizon
            )));
        }
        for (i, a) in acts.iter().enumerate() {
            if a.0 >= p.n_actions {
                v.push(Violation::ActionOutOfRange {
                    unit,
                    time: i + 1,
                    action: a.0,
                    n_actions: p.n_actions,
                });
            }
        }
        if let Some(&e) = p.exogenous_until.get(unit) {
            if e > p.obs_horizon {
                v.push(Violation::Exogeneity {
                    unit,
                    value: e,
                    obs_horizon: p.obs_horizon,
                });
            }
        }
        if let (true, Some(Some(declared))) = (control_ok, p.declared_deviation.get(unit)) {
            let end = (*declared).min(acts.len() + 1);
            for t in 1..end {
                if t > p.obs_horizon {
                    break;
                }
                let a = acts[t - 1];
                if a != p.control.at(t) {
                    v.push(Violation::ControlPeriod {
                        unit,
                        time: t,
                        declared: *declared,
                        action: a.0,
                    });
                }
            }
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { violations: v })
    }
}

impl Panel {
    /// Builds a panel, rejecting it if any invariant fails.
    pub fn new(parts: PanelParts) -> Result<Self, ValidationReport> {
        let panel = Panel { parts };
        validate_panel(&panel)?;
        Ok(panel)
    }

    /// Builds a panel without validation; run [`validate_panel`] before use.
    pub fn from_parts_unchecked(parts: PanelParts) -> Self {
        Panel { parts }
    }

    pub fn parts(&self) -> &PanelParts {
        &self.parts
    }

    pub fn into_parts(self) -> PanelParts {
        self.parts
    }

    pub fn n_units(&self) -> usize {
        self.parts.outcomes.len()
    }

    pub fn n_actions(&self) -> usize {
        self.parts.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.parts.horizon
    }

    pub fn obs_horizon(&self) -> usize {
        self.parts.obs_horizon
    }

    pub fn control(&self) -> &ControlSchedule {
        &self.parts.control
    }

    /// `Y[n, t]`, with `t` 1-indexed.
    #[inline]
    pub fn outcome(&self, n: usize, t: usize) -> f64 {
        self.parts.outcomes[n][t - 1]
    }

    /// `A[n, t]`, with `t` 1-indexed.
    #[inline]
    pub fn action(&self, n: usize, t: usize) -> ActionId {
        self.parts.actions[n][t - 1]
    }

    pub fn outcomes(&self, n: usize) -> &[f64] {
        &self.parts.outcomes[n]
    }

    pub fn actions(&self, n: usize) -> &[ActionId] {
        &self.parts.actions[n]
    }

    pub fn exogenous_until(&self, n: usize) -> usize {
        self.parts.exogenous_until[n]
    }

    pub fn declared_deviation(&self, n: usize) -> Option<usize> {
        self.parts.declared_deviation[n]
    }

    /// First period at which unit `n` departs from the control schedule, or
    /// `None` if it stays in control over the whole observation horizon.
    pub fn first_deviation_time(&self, n: usize) -> Option<usize> {
        self.parts.actions[n]
            .iter()
            .enumerate()
            .find(|(i, a)| **a != self.parts.control.at(i + 1))
            .map(|(i, _)| i + 1)
    }

    /// Whether unit `n` follows the control schedule through period `t`.
    pub fn in_control_through(&self, n: usize, t: usize) -> bool {
        (1..=t).all(|s| self.action(n, s) == self.parts.control.at(s))
    }

    /// Observed prefix `(A[n,1], ..., A[n,t])`.
    pub fn observed_sequence(&self, n: usize, t: usize) -> Result<ActionSequence, PanelError> {
        if n >= self.n_units() {
            return Err(PanelError::UnitOutOfRange {
                unit: n,
                n_units: self.n_units(),
            });
        }
        if t == 0 || t > self.obs_horizon() {
            return Err(PanelError::TimeOutOfRange {
                t,
                max: self.obs_horizon(),
            });
        }
        ActionSequence::new(self.parts.actions[n][..t].to_vec())
    }

    /// Copy of the panel cut to a shorter observation horizon. `horizon` is
    /// lowered to the new observation horizon if needed.
    pub fn truncated(&self, obs_horizon: usize) -> Panel {
        let obs = obs_horizon.min(self.obs_horizon());
        let mut parts = self.parts.clone();
        parts.obs_horizon = obs;
        parts.horizon = parts.horizon.min(obs);
        for row in &mut parts.outcomes {
            row.truncate(obs);
        }
        for row in &mut parts.actions {
            row.truncate(obs);
        }
        if let ControlSchedule::TimeVarying(actions) = &mut parts.control {
            actions.truncate(obs);
        }
        for e in &mut parts.exogenous_until {
            *e = (*e).min(obs);
        }
        Panel { parts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(xs: &[usize]) -> Vec<ActionId> {
        xs.iter().copied().map(ActionId).collect()
    }

    pub(crate) fn small_panel(actions: Vec<Vec<usize>>, horizon: usize) -> Panel {
        let n = actions.len();
        let obs = actions[0].len();
        Panel::new(PanelParts {
            n_actions: 3,
            horizon,
            obs_horizon: obs,
            outcomes: vec![vec![0.0; obs]; n],
            actions: actions.iter().map(|a| seq(a)).collect(),
            control: ControlSchedule::TimeInvariant(ActionId(0)),
            exogenous_until: vec![obs; n],
            declared_deviation: vec![None; n],
        })
        .unwrap()
    }

    #[test]
    fn first_deviation_examples() {
        let p = small_panel(vec![vec![0, 0, 0], vec![2, 0, 0]], 3);
        assert_eq!(p.first_deviation_time(0), None);
        assert_eq!(p.first_deviation_time(1), Some(1));
        let p = small_panel(vec![vec![0, 0, 1, 0]], 3);
        assert_eq!(p.first_deviation_time(0), Some(3));
    }

    #[test]
    fn observed_sequence_examples() {
        let p = small_panel(vec![vec![2, 1, 0]], 3);
        assert_eq!(p.observed_sequence(0, 1).unwrap().to_string(), "2");
        assert_eq!(p.observed_sequence(0, 3).unwrap().to_string(), "2-1-0");
        assert!(matches!(
            p.observed_sequence(0, 0),
            Err(PanelError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn validate_accepts_well_formed() {
        let parts = PanelParts {
            n_actions: 2,
            horizon: 2,
            obs_horizon: 3,
            outcomes: vec![vec![1.0, 2.0, 3.0]; 2],
            actions: vec![seq(&[0, 1, 1]), seq(&[0, 0, 0])],
            control: ControlSchedule::TimeInvariant(ActionId(0)),
            exogenous_until: vec![3, 3],
            declared_deviation: vec![Some(2), None],
        };
        assert!(Panel::new(parts).is_ok());
    }

    #[test]
    fn validate_reports_control_period_violation() {
        let parts = PanelParts {
            n_actions: 2,
            horizon: 3,
            obs_horizon: 3,
            outcomes: vec![vec![0.0; 3]],
            actions: vec![seq(&[1, 0, 0])],
            control: ControlSchedule::TimeInvariant(ActionId(0)),
            exogenous_until: vec![3],
            declared_deviation: vec![Some(2)],
        };
        let err = Panel::new(parts).unwrap_err();
        assert_eq!(
            err.violations,
            vec![Violation::ControlPeriod {
                unit: 0,
                time: 1,
                declared: 2,
                action: 1
            }]
        );
    }

    #[test]
    fn validate_reports_every_violation() {
        let parts = PanelParts {
            n_actions: 2,
            horizon: 2,
            obs_horizon: 2,
            outcomes: vec![vec![0.0, f64::NAN], vec![0.0]],
            actions: vec![seq(&[0, 2]), seq(&[0, 0])],
            control: ControlSchedule::TimeInvariant(ActionId(0)),
            exogenous_until: vec![2, 5],
            declared_deviation: vec![None, None],
        };
        let err = validate_panel(&Panel::from_parts_unchecked(parts)).unwrap_err();
        let v = &err.violations;
        assert!(v.contains(&Violation::ActionOutOfRange {
            unit: 0,
            time: 2,
            action: 2,
            n_actions: 2
        }));
        assert!(v.contains(&Violation::NonFinite { unit: 0, time: 2 }));
        assert!(v.iter().any(|x| matches!(x, Violation::Shape(_))));
        assert!(v.contains(&Violation::Exogeneity {
            unit: 1,
            value: 5,
            obs_horizon: 2
        }));
    }

    #[test]
    fn horizon_bounds() {
        let parts = PanelParts {
            n_actions: 1,
            horizon: 2,
            obs_horizon: 4,
            outcomes: vec![vec![0.0; 4]],
            actions: vec![seq(&[0, 0, 0, 0])],
            control: ControlSchedule::TimeInvariant(ActionId(0)),
            exogenous_until: vec![4],
            declared_deviation: vec![None],
        };
        let err = Panel::new(parts).unwrap_err();
        assert!(matches!(err.violations[0], Violation::Horizon(_)));
    }

    #[test]
    fn sequence_text_form() {
        let s: ActionSequence = "0-2-1".parse().unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.at(2), ActionId(2));
        assert_eq!(s.to_string(), "0-2-1");
        assert!("".parse::<ActionSequence>().is_err());
        assert!("0-x".parse::<ActionSequence>().is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "\"0-2-1\"");
    }

    #[test]
    fn time_varying_control_prefix() {
        let c = ControlSchedule::TimeVarying(seq(&[0, 1, 0]));
        assert_eq!(c.prefix(3).to_string(), "0-1-0");
        assert!(c.is_control(2, ActionId(1)));
        assert!(!c.is_time_invariant());
    }
}
