//! Donor weights: linear coefficients `β` expressing a target unit's latent
//! factor through its donors' factors.
//!
//! [`PcrWeights`] estimates `β` by principal component regression on
//! covariates. [`OracleWeights`] solves the minimum-norm least-squares
//! problem on known simulated factors, and certifies span membership by its
//! residual.

use crate::donors::DonorSet;
use crate::factors::LatentFactors;
use crate::panel::Panel;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightsError {
    #[error("donor set is empty")]
    NoDonors,
    #[error("covariate matrix has no columns")]
    NoCovariates,
    #[error("covariate rows have inconsistent lengths")]
    Shape,
    #[error("covariate matrix is identically zero")]
    AllZero,
    #[error("requested rank {requested} exceeds numerical rank {numerical}")]
    RankExceeded { requested: usize, numerical: usize },
    #[error("unit {unit} and its donors share no control window")]
    NoControlWindow { unit: usize },
    #[error("no covariates for unit {unit}")]
    MissingCovariates { unit: usize },
    #[error("singular value decomposition did not converge")]
    NoConvergence,
}

/// How many singular directions to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RankRule {
    Fixed { k: usize },
    /// Smallest `k` with `Σ_{l<=k} σ_l² >= fraction · Σ σ²`.
    EnergyThreshold { fraction: f64 },
    /// Every direction above the numerical-rank cutoff (pseudoinverse).
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcrConfig {
    pub rank_rule: RankRule,
    /// Singular values below `rel_cutoff · σ_1` count as zero.
    pub rel_cutoff: f64,
    /// Clamp a fixed rank to the numerical rank instead of failing.
    pub clamp_rank: bool,
}

impl Default for PcrConfig {
    fn default() -> Self {
        PcrConfig {
            rank_rule: RankRule::EnergyThreshold { fraction: 0.999 },
            rel_cutoff: f64::EPSILON.sqrt(),
            clamp_rank: true,
        }
    }
}

impl PcrConfig {
    pub fn fixed(k: usize) -> Self {
        PcrConfig {
            rank_rule: RankRule::Fixed { k },
            ..Default::default()
        }
    }

    pub fn pseudoinverse() -> Self {
        PcrConfig {
            rank_rule: RankRule::Numerical,
            ..Default::default()
        }
    }
}

/// Donor covariates (one row per donor) and the target's covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    pub donors: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl CovariateMatrix {
    pub fn n_covariates(&self) -> usize {
        self.target.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub target: usize,
    /// One weight per donor, aligned with the donor set's members.
    pub beta: Vec<f64>,
    /// Retained rank `k`.
    pub rank: usize,
    /// Singular values of the donor covariate matrix, descending.
    pub singular_values: Arc<[f64]>,
    /// `‖X'β − x_target‖`.
    pub residual: f64,
}

/// `β = (Σ_{l<=k} σ_l⁻¹ v_l u_l') x` for the thin SVD `X' = U Σ V'`, fitted once
/// per donor covariate matrix and applied to any number of targets.
#[derive(Debug, Clone)]
pub struct SpanProjector {
    /// Donor covariates, `|I| x p` row-major.
    x: Vec<f64>,
    n_donors: usize,
    p: usize,
    /// `|I| x p` row-major.
    projector: Vec<f64>,
    rank: usize,
    singular_values: Arc<[f64]>,
}

fn select_rank(sigma: &[f64], cfg: &PcrConfig) -> Result<usize, WeightsError> {
    let s1 = sigma.first().copied().unwrap_or(0.0);
    if s1 <= 0.0 || !s1.is_finite() {
        return Err(WeightsError::AllZero);
    }
    let numerical = sigma.iter().take_while(|&&s| s >= cfg.rel_cutoff * s1).count();
    let k = match cfg.rank_rule {
        RankRule::Fixed { k } if k > numerical => {
            if cfg.clamp_rank {
                log::debug!("rank {k} clamped to numerical rank {numerical}");
                numerical
            } else {
                return Err(WeightsError::RankExceeded {
                    requested: k,
                    numerical,
                });
            }
        }
        RankRule::Fixed { k } => k.max(1),
        RankRule::EnergyThreshold { fraction } => {
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut k = sigma.len();
            for (i, s) in sigma.iter().enumerate() {
                acc += s * s;
                if acc >= fraction * total {
                    k = i + 1;
                    break;
                }
            }
            k.min(numerical)
        }
        RankRule::Numerical => numerical,
    };
    Ok(k)
}

impl SpanProjector {
    pub fn fit(donors: &[Vec<f64>], cfg: &PcrConfig) -> Result<Self, WeightsError> {
        let n_donors = donors.len();
        if n_donors == 0 {
            return Err(WeightsError::NoDonors);
        }
        let p = donors[0].len();
        if p == 0 {
            return Err(WeightsError::NoCovariates);
        }
        if donors.iter().any(|r| r.len() != p) {
            return Err(WeightsError::Shape);
        }
        let x: Vec<f64> = donors.iter().flatten().copied().collect();
        // X' is p x |I|; column j is donor j's covariates.
        let xt = Mat::from_fn(p, n_donors, |i, j| donors[j][i]);
        let svd = xt.thin_svd().map_err(|_| WeightsError::NoConvergence)?;
        let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
        let mut order: Vec<usize> = (0..s.nrows()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let sigma: Vec<f64> = order.iter().map(|&i| s[i]).collect();
        let rank = select_rank(&sigma, cfg)?;

        let mut projector = vec![0.0; n_donors * p];
        for &l in order.iter().take(rank) {
            let inv = 1.0 / s[l];
            for j in 0..n_donors {
                let vj = v[(j, l)] * inv;
                let row = &mut projector[j * p..(j + 1) * p];
                for (i, r) in row.iter_mut().enumerate() {
                    *r += vj * u[(i, l)];
                }
            }
        }
        Ok(SpanProjector {
            x,
            n_donors,
            p,
            projector,
            rank,
            singular_values: sigma.into(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn apply(&self, target_unit: usize, target: &[f64]) -> Result<WeightVector, WeightsError> {
        if target.len() != self.p {
            return Err(WeightsError::Shape);
        }
        let beta: Vec<f64> = (0..self.n_donors)
            .map(|j| crate::linalg::dot(&self.projector[j * self.p..(j + 1) * self.p], target))
            .collect();
        let mut fitted = vec![0.0; self.p];
        for (j, b) in beta.iter().enumerate() {
            for (f, x) in fitted.iter_mut().zip(&self.x[j * self.p..(j + 1) * self.p]) {
                *f += b * x;
            }
        }
        let residual = crate::linalg::norm(&crate::linalg::sub(&fitted, target));
        Ok(WeightVector {
            target: target_unit,
            beta,
            rank: self.rank,
            singular_values: self.singular_values.clone(),
            residual,
        })
    }
}

/// Principal component regression of the target's covariates on the donors'.
pub fn pcr_fit(cov: &CovariateMatrix, cfg: &PcrConfig) -> Result<WeightVector, WeightsError> {
    SpanProjector::fit(&cov.donors, cfg)?.apply(usize::MAX, &cov.target)
}

/// Length of the control window shared by `target` and every donor: one less
/// than the earliest first deviation among them, or the full observation
/// horizon if none deviates.
pub fn shared_control_window(panel: &Panel, donors: &DonorSet, target: usize) -> usize {
    std::iter::once(target)
        .chain(donors.members.iter().copied())
        .map(|n| panel.first_deviation_time(n).map_or(panel.obs_horizon(), |t| t - 1))
        .min()
        .unwrap_or(0)
}

/// Outcomes over the shared control window as covariates.
pub fn control_covariates(
    panel: &Panel,
    donors: &DonorSet,
    target: usize,
) -> Result<CovariateMatrix, WeightsError> {
    let p = shared_control_window(panel, donors, target);
    if p == 0 {
        return Err(WeightsError::NoControlWindow { unit: target });
    }
    Ok(CovariateMatrix {
        donors: donors
            .members
            .iter()
            .map(|&j| panel.outcomes(j)[..p].to_vec())
            .collect(),
        target: panel.outcomes(target)[..p].to_vec(),
    })
}

/// Minimum-norm least-squares weights on the stacked factor vectors.
pub fn oracle_weights(
    factors: &LatentFactors,
    horizon: usize,
    lags: Option<usize>,
    target: usize,
    donors: &DonorSet,
) -> Result<WeightVector, WeightsError> {
    let rows: Vec<Vec<f64>> = donors
        .members
        .iter()
        .map(|&j| factors.stacked(j, horizon, lags))
        .collect();
    SpanProjector::fit(&rows, &PcrConfig::pseudoinverse())?
        .apply(target, &factors.stacked(target, horizon, lags))
}

/// Source of donor weights for the estimators.
pub trait WeightsProvider: Sync {
    fn name(&self) -> &'static str;

    /// Weights for each target over `donors`, in the order of `targets`.
    fn fit(
        &self,
        panel: &Panel,
        donors: &DonorSet,
        targets: &[usize],
    ) -> Result<Vec<WeightVector>, WeightsError>;
}

/// Weights from known latent factors.
#[derive(Debug, Clone)]
pub struct OracleWeights {
    factors: LatentFactors,
    lags: Option<usize>,
}

impl OracleWeights {
    /// Stacks LTI loadings over every lag the factors define, so baselines
    /// beyond the target horizon are covered.
    pub fn new(factors: LatentFactors) -> Self {
        let lags = match &factors {
            LatentFactors::Lti(f) => f.psi.first().map(Vec::len),
            _ => None,
        };
        OracleWeights { factors, lags }
    }

    pub fn factors(&self) -> &LatentFactors {
        &self.factors
    }
}

impl WeightsProvider for OracleWeights {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn fit(
        &self,
        panel: &Panel,
        donors: &DonorSet,
        targets: &[usize],
    ) -> Result<Vec<WeightVector>, WeightsError> {
        let horizon = panel.horizon();
        let rows: Vec<Vec<f64>> = donors
            .members
            .iter()
            .map(|&j| self.factors.stacked(j, horizon, self.lags))
            .collect();
        let proj = SpanProjector::fit(&rows, &PcrConfig::pseudoinverse())?;
        targets
            .par_iter()
            .map(|&n| proj.apply(n, &self.factors.stacked(n, horizon, self.lags)))
            .collect()
    }
}

/// Where PCR covariates come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateSource {
    /// Observed outcomes over the control window shared with each donor set.
    ControlWindow,
    /// A fixed covariate vector per unit.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct PcrWeights {
    pub config: PcrConfig,
    pub covariates: CovariateSource,
}

impl PcrWeights {
    pub fn new(config: PcrConfig, covariates: CovariateSource) -> Self {
        PcrWeights { config, covariates }
    }
}

impl WeightsProvider for PcrWeights {
    fn name(&self) -> &'static str {
        "pcr"
    }

    fn fit(
        &self,
        panel: &Panel,
        donors: &DonorSet,
        targets: &[usize],
    ) -> Result<Vec<WeightVector>, WeightsError> {
        if donors.is_empty() {
            return Err(WeightsError::NoDonors);
        }
        match &self.covariates {
            CovariateSource::Explicit(x) => {
                let row = |n: usize| x.get(n).ok_or(WeightsError::MissingCovariates { unit: n });
                let rows = donors
                    .members
                    .iter()
                    .map(|&j| row(j).cloned())
                    .collect::<Result<Vec<_>, _>>()?;
                let proj = SpanProjector::fit(&rows, &self.config)?;
                targets.par_iter().map(|&n| proj.apply(n, row(n)?)).collect()
            }
            CovariateSource::ControlWindow => {
                let donor_window = donors
                    .members
                    .iter()
                    .map(|&n| panel.first_deviation_time(n).map_or(panel.obs_horizon(), |t| t - 1))
                    .min()
                    .unwrap_or(0);
                // Targets sharing a window length share a projector.
                let mut projectors: std::collections::BTreeMap<usize, SpanProjector> =
                    Default::default();
                let mut out = Vec::with_capacity(targets.len());
                for &n in targets {
                    let own = panel
                        .first_deviation_time(n)
                        .map_or(panel.obs_horizon(), |t| t - 1);
                    let p = own.min(donor_window);
                    if p == 0 {
                        return Err(WeightsError::NoControlWindow { unit: n });
                    }
                    if !projectors.contains_key(&p) {
                        let rows: Vec<Vec<f64>> = donors
                            .members
                            .iter()
                            .map(|&j| panel.outcomes(j)[..p].to_vec())
                            .collect();
                        projectors.insert(p, SpanProjector::fit(&rows, &self.config)?);
                    }
                    out.push(projectors[&p].apply(n, &panel.outcomes(n)[..p])?);
                }
                Ok(out)
            }
        }
    }
}

/// Audit rows `target donor beta residual k`, one per donor weight.
pub fn weight_dump(donors: &DonorSet, weights: &[WeightVector]) -> String {
    let mut out = String::from("target\tdonor\tbeta\tresidual\tk\n");
    for w in weights {
        for (j, b) in donors.members.iter().zip(&w.beta) {
            let _ = writeln!(out, "{}\t{}\t{:.17e}\t{:.6e}\t{}", w.target, j, b, w.residual, w.rank);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::donors::DonorKind;
    use crate::factors::GeneralFactors;
    use crate::panel::{ActionId, ControlSchedule, PanelParts};

    fn cov(donors: &[&[f64]], target: &[f64]) -> CovariateMatrix {
        CovariateMatrix {
            donors: donors.iter().map(|r| r.to_vec()).collect(),
            target: target.to_vec(),
        }
    }

    #[test]
    fn self_match() {
        let w = pcr_fit(&cov(&[&[1.0, 2.0, 3.0]], &[1.0, 2.0, 3.0]), &PcrConfig::fixed(1)).unwrap();
        assert!((w.beta[0] - 1.0).abs() < 1e-12);
        assert!(w.residual < 1e-12);
    }

    #[test]
    fn diagonal_examples() {
        let c = cov(&[&[2.0, 0.0], &[0.0, 1.0]], &[4.0, 3.0]);
        let w = pcr_fit(&c, &PcrConfig::fixed(2)).unwrap();
        assert!((w.beta[0] - 2.0).abs() < 1e-12 && (w.beta[1] - 3.0).abs() < 1e-12);
        assert!(w.residual < 1e-12);
        let w = pcr_fit(&c, &PcrConfig::fixed(1)).unwrap();
        assert!((w.beta[0] - 2.0).abs() < 1e-12 && w.beta[1].abs() < 1e-12);
        assert!((w.residual - 3.0).abs() < 1e-12);
        assert_eq!(&*w.singular_values, &[2.0, 1.0]);
    }

    #[test]
    fn rank_overflow() {
        let c = cov(&[&[1.0, 1.0], &[2.0, 2.0]], &[1.0, 1.0]);
        assert_eq!(pcr_fit(&c, &PcrConfig::fixed(2)).unwrap().rank, 1);
        let strict = PcrConfig {
            clamp_rank: false,
            ..PcrConfig::fixed(2)
        };
        assert_eq!(
            pcr_fit(&c, &strict),
            Err(WeightsError::RankExceeded {
                requested: 2,
                numerical: 1
            })
        );
        let zero = cov(&[&[0.0, 0.0]], &[1.0, 0.0]);
        assert_eq!(pcr_fit(&zero, &PcrConfig::default()), Err(WeightsError::AllZero));
    }

    #[test]
    fn energy_threshold_picks_smallest_rank() {
        let c = cov(&[&[10.0, 0.0], &[0.0, 0.1]], &[1.0, 1.0]);
        let cfg = PcrConfig {
            rank_rule: RankRule::EnergyThreshold { fraction: 0.99 },
            ..Default::default()
        };
        assert_eq!(pcr_fit(&c, &cfg).unwrap().rank, 1);
        let cfg = PcrConfig {
            rank_rule: RankRule::EnergyThreshold { fraction: 1.0 },
            ..Default::default()
        };
        assert_eq!(pcr_fit(&c, &cfg).unwrap().rank, 2);
    }

    fn window_panel(actions: &[&[usize]]) -> Panel {
        let t = actions[0].len();
        Panel::new(PanelParts {
            n_actions: 2,
            horizon: t,
            obs_horizon: t,
            outcomes: (0..actions.len())
                .map(|n| (0..t).map(|s| (n * 10 + s) as f64).collect())
                .collect(),
            actions: actions
                .iter()
                .map(|r| r.iter().copied().map(ActionId).collect())
                .collect(),
            control: ControlSchedule::TimeInvariant(ActionId(0)),
            exogenous_until: vec![t; actions.len()],
            declared_deviation: vec![None; actions.len()],
        })
        .unwrap()
    }

    #[test]
    fn control_covariate_windows() {
        let p = window_panel(&[&[0, 0, 0, 1], &[0, 0, 0, 0], &[0, 0, 0, 1]]);
        let d = DonorSet {
            kind: DonorKind::ControlThrough { time: 3 },
            members: vec![1, 2],
        };
        let c = control_covariates(&p, &d, 0).unwrap();
        assert_eq!(c.n_covariates(), 3);
        assert_eq!(c.donors[0], vec![10.0, 11.0, 12.0]);

        let p = window_panel(&[&[1, 0, 0], &[0, 0, 0]]);
        let d = DonorSet {
            kind: DonorKind::ControlThrough { time: 3 },
            members: vec![1],
        };
        assert_eq!(
            control_covariates(&p, &d, 0),
            Err(WeightsError::NoControlWindow { unit: 0 })
        );

        let p = window_panel(&[&[0, 0, 0, 0, 0], &[0, 0, 1, 0, 0], &[0, 0, 0, 1, 0]]);
        let d = DonorSet {
            kind: DonorKind::LtiAction {
                action: ActionId(1),
                first_period_only: false,
            },
            members: vec![1, 2],
        };
        assert_eq!(control_covariates(&p, &d, 0).unwrap().n_covariates(), 2);
    }

    fn general(v: &[&[f64]]) -> LatentFactors {
        LatentFactors::General(GeneralFactors {
            unit: v.iter().map(|x| vec![x.to_vec()]).collect(),
            sequence: Default::default(),
        })
    }

    fn set(members: Vec<usize>) -> DonorSet {
        DonorSet {
            kind: DonorKind::ControlThrough { time: 1 },
            members,
        }
    }

    #[test]
    fn oracle_weight_examples() {
        let f = general(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let w = oracle_weights(&f, 1, None, 1, &set(vec![0, 1, 2])).unwrap();
        for (j, b) in w.beta.iter().enumerate() {
            assert!((b - if j == 1 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        assert!(w.residual < 1e-12);

        let f = general(&[&[1.0, 3.0], &[2.0, 0.0], &[0.0, 6.0]]);
        let w = oracle_weights(&f, 1, None, 0, &set(vec![1, 2])).unwrap();
        assert!((w.beta[0] - 0.5).abs() < 1e-12 && (w.beta[1] - 0.5).abs() < 1e-12);

        let f = general(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let w = oracle_weights(&f, 1, None, 0, &set(vec![1])).unwrap();
        assert!((w.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dump_format() {
        let d = set(vec![3, 5]);
        let w = WeightVector {
            target: 0,
            beta: vec![0.25, 0.75],
            rank: 1,
            singular_values: Arc::from(vec![1.0]),
            residual: 0.0,
        };
        let dump = weight_dump(&d, &[w]);
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("0\t5\t7.5"));
    }
}
