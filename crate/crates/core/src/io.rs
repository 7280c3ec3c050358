//! File formats: panels as long CSV (`unit,time,action,outcome`) plus a JSON
//! metadata document; factors, noise, parameters and fitted tables as JSON.

use crate::panel::{ActionId, ControlSchedule, Panel, PanelParts, ValidationReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const PANEL_FILE: &str = "panel.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const FACTORS_FILE: &str = "factors.json";
pub const NOISE_FILE: &str = "noise.json";
pub const PARAMS_FILE: &str = "params.json";
pub const ROLES_FILE: &str = "roles.json";
pub const COVARIATES_FILE: &str = "covariates.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Invalid(#[from] ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMetadata {
    pub n_units: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub obs_horizon: usize,
    pub control: ControlSchedule,
    #[serde(default)]
    pub exogenous_until: Option<Vec<usize>>,
    #[serde(default)]
    pub declared_deviation: Option<Vec<Option<usize>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PanelRecord {
    unit: usize,
    time: usize,
    action: usize,
    outcome: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<(), IoError> {
    fs::create_dir_all(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `panel.csv` and `metadata.json` into `dir`.
pub fn write_panel(dir: &Path, panel: &Panel) -> Result<(), IoError> {
    create_dir(dir)?;
    let path = dir.join(PANEL_FILE);
    let csv_err = |source| IoError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for n in 0..panel.n_units() {
        for t in 1..=panel.obs_horizon() {
            w.serialize(PanelRecord {
                unit: n,
                time: t,
                action: panel.action(n, t).0,
                outcome: panel.outcome(n, t),
            })
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| IoError::File {
        path: path.clone(),
        source,
    })?;
    let p = panel.parts();
    write_json(
        &dir.join(METADATA_FILE),
        &PanelMetadata {
            n_units: panel.n_units(),
            n_actions: p.n_actions,
            horizon: p.horizon,
            obs_horizon: p.obs_horizon,
            control: p.control.clone(),
            exogenous_until: Some(p.exogenous_until.clone()),
            declared_deviation: Some(p.declared_deviation.clone()),
        },
    )
}

/// Reads a panel written by [`write_panel`] and validates it. Missing
/// exogeneity metadata defaults to the full observation horizon, with a
/// warning.
pub fn read_panel(dir: &Path) -> Result<Panel, IoError> {
    let meta: PanelMetadata = read_json(&dir.join(METADATA_FILE))?;
    let path = dir.join(PANEL_FILE);
    let fmt = |message: String| IoError::Format {
        path: path.clone(),
        message,
    };
    let (n, obs) = (meta.n_units, meta.obs_horizon);
    let mut outcomes = vec![vec![f64::NAN; obs]; n];
    let mut actions = vec![vec![ActionId(usize::MAX); obs]; n];
    let mut seen = vec![vec![false; obs]; n];
    let mut r = csv::Reader::from_path(&path).map_err(|source| IoError::Csv {
        path: path.clone(),
        source,
    })?;
    for rec in r.deserialize::<PanelRecord>() {
        let rec = rec.map_err(|source| IoError::Csv {
            path: path.clone(),
            source,
        })?;
        if rec.unit >= n || rec.time == 0 || rec.time > obs {
            return Err(fmt(format!("cell (unit {}, time {}) outside the declared shape", rec.unit, rec.time)));
        }
        if seen[rec.unit][rec.time - 1] {
            return Err(fmt(format!("duplicate cell (unit {}, time {})", rec.unit, rec.time)));
        }
        seen[rec.unit][rec.time - 1] = true;
        outcomes[rec.unit][rec.time - 1] = rec.outcome;
        actions[rec.unit][rec.time - 1] = ActionId(rec.action);
    }
    if let Some((u, row)) = seen.iter().enumerate().find(|(_, row)| row.iter().any(|s| !s)) {
        let t = row.iter().position(|s| !s).unwrap() + 1;
        return Err(fmt(format!("missing cell (unit {u}, time {t})")));
    }
    let exogenous_until = meta.exogenous_until.unwrap_or_else(|| {
        log::warn!("no exogeneity metadata in {}; treating every unit as exogenous through period {obs}", dir.display());
        vec![obs; n]
    });
    let declared_deviation = meta.declared_deviation.unwrap_or_else(|| vec![None; n]);
    Ok(Panel::new(PanelParts {
        n_actions: meta.n_actions,
        horizon: meta.horizon,
        obs_horizon: obs,
        outcomes,
        actions,
        control: meta.control,
        exogenous_until,
        declared_deviation,
    })?)
}
