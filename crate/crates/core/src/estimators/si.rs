use super::{
    check_unit, CounterfactualEstimate, EstimateError, EstimatorConfig, Term, TermLabel, TermSource,
};
use crate::donors::DonorIndex;
use crate::panel::{ActionSequence, Panel};
use crate::weights::WeightsProvider;
use std::collections::BTreeMap;

/// `Σ_j β_j Y[j, T]` over the units that received exactly `sequence`.
pub fn estimate_si(
    panel: &Panel,
    weights: &dyn WeightsProvider,
    cfg: &EstimatorConfig,
    n: usize,
    sequence: &ActionSequence,
) -> Result<CounterfactualEstimate, EstimateError> {
    estimate_si_many(panel, weights, cfg, &[(n, sequence.clone())])
        .pop()
        .expect("one query in, one result out")
}

/// SI estimates for many `(unit, sequence)` queries, fitting weights once per
/// distinct sequence. Results keep the query order.
pub fn estimate_si_many(
    panel: &Panel,
    weights: &dyn WeightsProvider,
    cfg: &EstimatorConfig,
    queries: &[(usize, ActionSequence)],
) -> Vec<Result<CounterfactualEstimate, EstimateError>> {
    let index = DonorIndex::new(panel);
    let mut by_sequence: BTreeMap<&ActionSequence, Vec<usize>> = BTreeMap::new();
    for (i, (_, seq)) in queries.iter().enumerate() {
        by_sequence.entry(seq).or_default().push(i);
    }
    let mut out: Vec<Option<Result<CounterfactualEstimate, EstimateError>>> =
        vec![None; queries.len()];
    for (seq, idx) in by_sequence {
        let result: Result<Vec<CounterfactualEstimate>, EstimateError> = (|| {
            for &i in &idx {
                check_unit(panel, queries[i].0)?;
            }
            let set = index.si(seq)?;
            cfg.check(&set)?;
            let targets: Vec<usize> = idx.iter().map(|&i| queries[i].0).collect();
            let fitted = weights
                .fit(panel, &set, &targets)
                .map_err(|source| EstimateError::Weights {
                    kind: set.kind.clone(),
                    source,
                })?;
            let t = seq.len();
            Ok(fitted
                .into_iter()
                .map(|w| {
                    let value: f64 = w
                        .beta
                        .iter()
                        .zip(&set.members)
                        .map(|(b, &j)| b * panel.outcome(j, t))
                        .sum();
                    let term = Term {
                        label: TermLabel::Synthetic,
                        value,
                        source: TermSource::Synthetic {
                            kind: set.kind.clone(),
                            n_donors: set.len(),
                            rank: w.rank,
                            residual: w.residual,
                        },
                    };
                    CounterfactualEstimate::from_terms(w.target, seq.clone(), vec![term])
                })
                .collect())
        })();
        match result {
            Ok(estimates) => {
                for (i, e) in idx.into_iter().zip(estimates) {
                    out[i] = Some(Ok(e));
                }
            }
            Err(e) => {
                for i in idx {
                    out[i] = Some(Err(e.clone()));
                }
            }
        }
    }
    out.into_iter().map(|r| r.expect("every query answered")).collect()
}
