//! Ground truth from known latent factors: expected counterfactual outcomes,
//! blips, baselines, and exhaustive tables over action sequences.

use crate::factors::LatentFactors;
use crate::linalg::{dot, sub};
use crate::panel::{ActionId, ActionSequence, ControlSchedule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_ENUMERATION_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no embedding stored for sequence {0}")]
    MissingEmbedding(ActionSequence),
    #[error("{what} is not defined for the {variant} factor model")]
    Unsupported { what: &'static str, variant: &'static str },
    #[error("{count} sequences exceed the enumeration cap {cap}")]
    CapExceeded { count: usize, cap: usize },
    #[error("unit {unit} outside 0..{n_units}")]
    UnitOutOfRange { unit: usize, n_units: usize },
    #[error("period {t} outside the factors' range 1..={max}")]
    TimeOutOfRange { t: usize, max: usize },
    #[error("action {action} has no embedding")]
    UnknownAction { action: ActionId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub factors: LatentFactors,
    pub control: ControlSchedule,
}

/// Both sides of the additive identity `E[Y] = b + Σ γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelescopingResidual {
    pub counterfactual: f64,
    pub decomposed: f64,
    /// Sum of the magnitudes of every term; the natural scale for a relative
    /// comparison.
    pub scale: f64,
}

impl TelescopingResidual {
    pub fn absolute(&self) -> f64 {
        (self.counterfactual - self.decomposed).abs()
    }

    pub fn relative(&self) -> f64 {
        let a = self.absolute();
        if a == 0.0 {
            0.0
        } else {
            a / self.scale
        }
    }
}

impl Oracle {
    pub fn new(factors: LatentFactors, control: ControlSchedule) -> Self {
        Oracle { factors, control }
    }

    pub fn n_units(&self) -> usize {
        self.factors.n_units()
    }

    fn max_time(&self) -> usize {
        match &self.factors {
            LatentFactors::General(f) => f.unit.first().map_or(0, Vec::len),
            LatentFactors::Ltv(f) => f.psi.first().map_or(0, Vec::len),
            LatentFactors::Lti(f) => f.psi.first().map_or(0, Vec::len),
        }
    }

    fn check(&self, n: usize, t: usize) -> Result<(), OracleError> {
        if n >= self.n_units() {
            return Err(OracleError::UnitOutOfRange {
                unit: n,
                n_units: self.n_units(),
            });
        }
        let max = self.max_time();
        if t == 0 || t > max {
            return Err(OracleError::TimeOutOfRange { t, max });
        }
        Ok(())
    }

    fn embedding(&self, a: ActionId) -> Result<&[f64], OracleError> {
        let table = match &self.factors {
            LatentFactors::Ltv(f) => &f.action_embedding,
            LatentFactors::Lti(f) => &f.action_embedding,
            LatentFactors::General(_) => unreachable!("general factors have no per-action embedding"),
        };
        table
            .get(a.0)
            .map(Vec::as_slice)
            .ok_or(OracleError::UnknownAction { action: a })
    }

    /// `E[Y^{(ā^t)}_{n,t} | factors]` for `t = seq.len()`.
    pub fn counterfactual(&self, n: usize, seq: &ActionSequence) -> Result<f64, OracleError> {
        let t = seq.len();
        self.check(n, t)?;
        match &self.factors {
            LatentFactors::General(f) => {
                let w = f.w(seq).ok_or_else(|| OracleError::MissingEmbedding(seq.clone()))?;
                Ok(dot(f.v(n, t), w))
            }
            LatentFactors::Ltv(f) => {
                let mut acc = 0.0;
                for l in 1..=t {
                    acc += dot(f.psi(n, t, l), self.embedding(seq.at(l))?);
                }
                Ok(acc)
            }
            LatentFactors::Lti(f) => {
                let mut acc = 0.0;
                for l in 1..=t {
                    acc += dot(f.psi(n, t - l), self.embedding(seq.at(l))?);
                }
                Ok(acc)
            }
        }
    }

    fn loading(&self, n: usize, horizon: usize, t: usize) -> Result<&[f64], OracleError> {
        match &self.factors {
            LatentFactors::Ltv(f) => Ok(f.psi(n, horizon, t)),
            LatentFactors::Lti(f) => Ok(f.psi(n, horizon - t)),
            LatentFactors::General(_) => Err(OracleError::Unsupported {
                what: "blip",
                variant: "general",
            }),
        }
    }

    /// Blip of action `a` at period `t` on the outcome at `horizon`:
    /// `<ψ^{T,t}, w_a − w_{0_t}>` (LTV) or `<ψ^{T−t}, w_a − w_0>` (LTI).
    pub fn blip(&self, n: usize, horizon: usize, t: usize, a: ActionId) -> Result<f64, OracleError> {
        self.check(n, horizon)?;
        if t == 0 || t > horizon {
            return Err(OracleError::TimeOutOfRange { t, max: horizon });
        }
        let psi = self.loading(n, horizon, t)?;
        let diff = sub(self.embedding(a)?, self.embedding(self.control.at(t))?);
        Ok(dot(psi, &diff))
    }

    /// Lag-`k` blip `<ψ^k, w_a − w_0>` of an LTI model.
    pub fn lag_blip(&self, n: usize, lag: usize, a: ActionId) -> Result<f64, OracleError> {
        let LatentFactors::Lti(f) = &self.factors else {
            return Err(OracleError::Unsupported {
                what: "lag blip",
                variant: self.factors.variant_name(),
            });
        };
        self.check(n, lag + 1)?;
        let control = self.control.invariant_action().ok_or(OracleError::Unsupported {
            what: "lag blip under a time-varying control",
            variant: "lti",
        })?;
        let diff = sub(self.embedding(a)?, self.embedding(control)?);
        Ok(dot(f.psi(n, lag), &diff))
    }

    /// Expected outcome at `t` under the control schedule through `t`.
    pub fn baseline(&self, n: usize, t: usize) -> Result<f64, OracleError> {
        if let LatentFactors::General(_) = self.factors {
            return Err(OracleError::Unsupported {
                what: "baseline",
                variant: "general",
            });
        }
        self.check(n, t)?;
        let mut acc = 0.0;
        for l in 1..=t {
            acc += dot(self.loading(n, t, l)?, self.embedding(self.control.at(l))?);
        }
        Ok(acc)
    }

    /// Compares the counterfactual with `baseline + Σ blips`.
    pub fn telescoping_check(
        &self,
        n: usize,
        seq: &ActionSequence,
    ) -> Result<TelescopingResidual, OracleError> {
        let horizon = seq.len();
        let counterfactual = self.counterfactual(n, seq)?;
        let baseline = self.baseline(n, horizon)?;
        let mut decomposed = baseline;
        let mut scale = counterfactual.abs() + baseline.abs();
        for t in 1..=horizon {
            let g = self.blip(n, horizon, t, seq.at(t))?;
            decomposed += g;
            scale += g.abs();
        }
        Ok(TelescopingResidual {
            counterfactual,
            decomposed,
            scale,
        })
    }

    /// Every sequence of length `horizon` for every unit, lexicographic
    /// within each unit.
    pub fn brute_force_table(
        &self,
        horizon: usize,
        n_actions: usize,
        cap: usize,
    ) -> Result<OracleTable, OracleError> {
        let count = n_actions
            .checked_pow(horizon as u32)
            .filter(|&c| c <= cap)
            .ok_or(OracleError::CapExceeded {
                count: n_actions.saturating_pow(horizon as u32),
                cap,
            })?;
        let sequences: Vec<ActionSequence> = (0..count)
            .map(|mut code| {
                let mut digits = vec![0usize; horizon];
                for d in digits.iter_mut().rev() {
                    *d = code % n_actions;
                    code /= n_actions;
                }
                ActionSequence::from_indices(&digits).expect("horizon >= 1")
            })
            .collect();
        let mut table = self.table_for(&sequences)?;
        table.coverage = Coverage::Enumerated;
        Ok(table)
    }

    /// Expected outcomes for every unit under each listed sequence.
    pub fn table_for(&self, sequences: &[ActionSequence]) -> Result<OracleTable, OracleError> {
        let rows = (0..self.n_units())
            .into_par_iter()
            .map(|n| {
                sequences
                    .iter()
                    .map(|s| {
                        Ok(OracleRow {
                            unit: n,
                            sequence: s.clone(),
                            expected_outcome: self.counterfactual(n, s)?,
                        })
                    })
                    .collect::<Result<Vec<_>, OracleError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OracleTable {
            coverage: Coverage::Sampled,
            rows: rows.into_iter().flatten().collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Enumerated,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub unit: usize,
    pub sequence: ActionSequence,
    pub expected_outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub coverage: Coverage,
    pub rows: Vec<OracleRow>,
}

impl OracleTable {
    pub fn get(&self, n: usize, seq: &ActionSequence) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.unit == n && &r.sequence == seq)
            .map(|r| r.expected_outcome)
    }

    /// CSV with header `unit,sequence,expected_outcome`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
