//! Per-query errors, their aggregates, and donor-set census results.

use crate::estimators::ConservationReport;
use crate::panel::ActionSequence;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub unit: usize,
    pub sequence: ActionSequence,
    pub estimate: Option<f64>,
    pub oracle: Option<f64>,
    pub abs_error: Option<f64>,
    /// Why no estimate was produced.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Rows with both an estimate and an oracle value.
    pub count: usize,
    pub mean_abs: f64,
    pub rmse: f64,
    pub max_abs: f64,
}

impl Aggregates {
    pub fn from_rows(rows: &[QueryRow]) -> Self {
        let errs: Vec<f64> = rows.iter().filter_map(|r| r.abs_error).collect();
        Self::from_errors(&errs)
    }

    pub fn from_errors(errs: &[f64]) -> Self {
        if errs.is_empty() {
            return Aggregates::default();
        }
        let n = errs.len() as f64;
        Aggregates {
            count: errs.len(),
            mean_abs: errs.iter().sum::<f64>() / n,
            rmse: (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            max_abs: errs.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// A donor or horizon deficit met while answering queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitIncident {
    /// The query that hit it, when it was query-specific.
    pub query: Option<(usize, ActionSequence)>,
    pub message: String,
}

/// Donor-set counts for one estimator family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCensus {
    pub total: usize,
    pub deficient: usize,
    /// Human-readable names of the deficient sets.
    pub deficient_sets: Vec<String>,
}

impl FamilyCensus {
    pub fn deficient_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.deficient as f64 / self.total as f64
        }
    }
}

/// How many required donor sets fall below the minimum size, per estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonorCensus {
    pub min_donors: usize,
    /// One set per action sequence of length `T`; `None` if enumeration was
    /// capped.
    pub si: Option<FamilyCensus>,
    /// One set per `(a, t)`; control actions count as the control-through-`t`
    /// set.
    pub ltv: FamilyCensus,
    /// The control family (every control-through-`t` set up to the
    /// observation horizon) plus one family per action; the control action's
    /// family needs no donors. `None` under a time-varying control.
    pub lti: Option<FamilyCensus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub estimator: String,
    pub weights: String,
    pub rows: Vec<QueryRow>,
    pub aggregates: Aggregates,
    pub deficits: Vec<DeficitIncident>,
    pub census: Option<DonorCensus>,
    pub conservation: Option<ConservationReport>,
}

impl MetricsReport {
    /// Whether the stored aggregates match a recomputation from the rows.
    pub fn aggregates_consistent(&self) -> bool {
        Aggregates::from_rows(&self.rows) == self.aggregates
    }

    /// CSV `unit,sequence,estimate,oracle,abs_error,error`.
    pub fn write_rows_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit", "sequence", "estimate", "oracle", "abs_error", "error"])?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.17e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.unit.to_string(),
                r.sequence.to_string(),
                opt(r.estimate),
                opt(r.oracle),
                opt(r.abs_error),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row of the tidy sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "M")]
    pub multiplicity: usize,
    pub sigma: f64,
    pub rep: usize,
    pub estimator: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub multiplicity: usize,
    pub sigma: f64,
    pub estimator: String,
    /// Over every query of every successful replication. Each replication
    /// answers the same number of queries, so `rmse` is also the root of the
    /// mean per-replication MSE.
    pub aggregates: Aggregates,
    pub replications: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

impl SweepCell {
    pub fn rmse(&self) -> f64 {
        if self.replications == 0 {
            f64::NAN
        } else {
            self.aggregates.rmse
        }
    }
}

impl SweepReport {
    pub fn cell(&self, estimator: &str, multiplicity: usize, sigma: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.multiplicity == multiplicity && c.sigma == sigma)
    }

    /// Tidy CSV `M,sigma,rep,estimator,rmse`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_of_known_errors() {
        let a = Aggregates::from_errors(&[3.0, 4.0]);
        assert_eq!(a.count, 2);
        assert_eq!(a.mean_abs, 3.5);
        assert_eq!(a.rmse, (12.5f64).sqrt());
        assert_eq!(a.max_abs, 4.0);
        assert_eq!(Aggregates::from_errors(&[]), Aggregates::default());
    }

    #[test]
    fn sweep_csv_header() {
        let report = SweepReport {
            rows: vec![SweepRow {
                multiplicity: 16,
                sigma: 1.0,
                rep: 0,
                estimator: "lti".into(),
                rmse: 0.5,
            }],
            cells: vec![],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "M,sigma,rep,estimator,rmse\n16,1.0,0,lti,0.5\n");
    }
}
