//! Hyperparameter grid search scored by mean held-out AUPR over folds.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{canonical_key, RunConfig};
use crate::data::{training_view, AssociationMatrix, FoldPlan};
use crate::error::{Error, Result};
use crate::metrics::evaluate;

use super::train;

/// Named axes; cells are their cartesian product with the last axis varying
/// fastest.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GridSpec {
    pub axes: Vec<(String, Vec<String>)>,
}

/// The full search space: latent dimension, neighbor cap, fusion weight,
/// alpha, gamma and margin.
pub fn full_grid() -> GridSpec {
    let axis = |k: &str, vs: &[&str]| (k.to_string(), vs.iter().map(|v| v.to_string()).collect());
    GridSpec {
        axes: vec![
            axis("latent_dim", &["8", "16", "64", "128", "256", "512"]),
            axis("neighbor_cap", &["1", "5", "10", "20"]),
            axis("fusion_weight", &["0.1", "0.3", "0.5", "0.7", "0.9"]),
            axis("alpha", &["0.1", "0.3", "0.5", "0.7", "0.9"]),
            axis("gamma", &["1", "2", "3"]),
            axis("margin", &["0.001", "0.01", "0.1", "0.2"]),
        ],
    }
}

impl GridSpec {
    /// One axis per line: `key=v1,v2,...`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: lineno + 1, message };
            let (k, vs) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=v1,v2,..., got `{line}`")))?;
            let key = canonical_key(k);
            let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            if values.is_empty() {
                return Err(err(format!("axis `{key}` has no values")));
            }
            let mut probe = RunConfig::default();
            for v in &values {
                probe.set(&key, v).map_err(|e| err(e.to_string()))?;
            }
            if axes.iter().any(|(a, _)| *a == key) {
                return Err(err(format!("axis `{key}` given twice")));
            }
            axes.push((key, values));
        }
        let spec = Self { axes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Settings of cell `index` as `(key, value)` pairs in axis order.
    pub fn cell(&self, mut index: usize) -> Vec<(&str, &str)> {
        let mut out = vec![("", ""); self.axes.len()];
        for (slot, (k, vs)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = (k.as_str(), vs[index % vs.len()].as_str());
            index /= vs.len();
        }
        out
    }

    pub fn cell_config(&self, base: &RunConfig, index: usize) -> Result<RunConfig> {
        let mut cfg = base.clone();
        for (k, v) in self.cell(index) {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, vs) in &self.axes {
            let _ = writeln!(s, "{k}={}", vs.join(","));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub index: usize,
    pub config: RunConfig,
    pub fold_aupr: Vec<f64>,
    /// NaN when the cell failed.
    pub mean_aupr: f64,
    pub error: Option<String>,
}

impl CellResult {
    pub fn from_folds(index: usize, config: RunConfig, fold_aupr: Vec<f64>) -> Self {
        let mean_aupr = fold_aupr.iter().sum::<f64>() / fold_aupr.len() as f64;
        Self { index, config, fold_aupr, mean_aupr, error: None }
    }

    pub fn failed(index: usize, config: RunConfig, error: &Error) -> Self {
        Self { index, config, fold_aupr: Vec::new(), mean_aupr: f64::NAN, error: Some(error.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub cells: Vec<CellResult>,
    /// Position in `cells` of the selected cell.
    pub best: usize,
}

impl GridOutcome {
    pub fn best_cell(&self) -> &CellResult {
        &self.cells[self.best]
    }
}

/// Held-out AUPR of every fold, training on the remaining folds.
pub fn evaluate_cell(mat: &AssociationMatrix, plan: &FoldPlan, cfg: &RunConfig) -> Result<Vec<f64>> {
    let tc = cfg.train_config()?;
    (0..plan.num_folds())
        .into_par_iter()
        .map(|k| {
            let view = training_view(mat, plan, k)?;
            let report = train(&view, &tc)?;
            let scores = report.model.score_all(&view)?;
            Ok(evaluate(&scores, &view, &plan.fold_positives(k), cfg.hr_cutoff)?.aupr)
        })
        .collect()
}

/// Highest mean AUPR; ties go to the smaller latent dimension, then the
/// smaller neighbor cap, then the earlier cell. Failed cells never win.
pub fn select_best(cells: &[CellResult]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mean_aupr.is_finite())
        .min_by(|(_, a), (_, b)| {
            b.mean_aupr
                .total_cmp(&a.mean_aupr)
                .then(a.config.latent_dim.cmp(&b.config.latent_dim))
                .then(a.config.neighbor_cap.cmp(&b.config.neighbor_cap))
                .then(a.index.cmp(&b.index))
        })
        .map(|(pos, _)| pos)
}

/// Evaluates every cell of `spec` on top of `base`.
pub fn grid_search(mat: &AssociationMatrix, plan: &FoldPlan, base: &RunConfig, spec: &GridSpec) -> Result<GridOutcome> {
    spec.validate()?;
    let cells = (0..spec.cardinality())
        .into_par_iter()
        .map(|index| {
            let config = spec.cell_config(base, index)?;
            Ok(match evaluate_cell(mat, plan, &config) {
                Ok(folds) => CellResult::from_folds(index, config, folds),
                Err(e) => {
                    log::warn!("grid cell {index} failed: {e}");
                    CellResult::failed(index, config, &e)
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&cells).ok_or_else(|| Error::Config("every grid cell failed".into()))?;
    Ok(GridOutcome { cells, best })
}
