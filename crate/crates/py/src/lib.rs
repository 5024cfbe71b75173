//! Python bindings: datasets, fold plans, run configurations, trained models,
//! the loss terms and ranking metrics.

use std::path::PathBuf;

use bmf::experiment::{self, DatasetFormat};
use bmf::loss::batch_loss;
use bmf::metrics;
use bmf::synthetic::bundled_block_matrix;
use bmf::{checkpoint, AssociationMatrix, LossConfig, LossKind, RunConfig};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

fn err(e: bmf::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Dataset", module = "bmf_py", frozen)]
struct Dataset {
    inner: AssociationMatrix,
}

#[pymethods]
impl Dataset {
    /// Edge list or dense 0/1 matrix; `format` is auto, edges or dense.
    #[staticmethod]
    #[pyo3(signature = (path, format = "auto", prune = false))]
    fn load(path: PathBuf, format: &str, prune: bool) -> PyResult<Self> {
        let format: DatasetFormat = format.parse().map_err(err)?;
        Ok(Self { inner: experiment::load_dataset(path, format, prune).map_err(err)? })
    }

    #[staticmethod]
    fn from_edges(edges: Vec<(String, String)>) -> PyResult<Self> {
        let inner = AssociationMatrix::from_edges(edges.iter().map(|(d, s)| (d.as_str(), s.as_str()))).map_err(err)?;
        Ok(Self { inner })
    }

    /// The bundled 200 x 150 block matrix.
    #[staticmethod]
    fn synthetic() -> Self {
        Self { inner: bundled_block_matrix() }
    }

    fn prune(&self) -> PyResult<Self> {
        Ok(Self { inner: bmf::prune_empty(&self.inner).map_err(err)? })
    }

    #[getter]
    fn num_drugs(&self) -> usize {
        self.inner.num_drugs()
    }

    #[getter]
    fn num_diseases(&self) -> usize {
        self.inner.num_diseases()
    }

    #[getter]
    fn num_positives(&self) -> usize {
        self.inner.num_positives()
    }

    #[getter]
    fn sparsity(&self) -> f64 {
        self.inner.sparsity()
    }

    #[getter]
    fn drug_ids(&self) -> Vec<String> {
        self.inner.drug_ids().to_vec()
    }

    #[getter]
    fn disease_ids(&self) -> Vec<String> {
        self.inner.disease_ids().to_vec()
    }

    fn positives(&self) -> Vec<(usize, usize)> {
        self.inner.positives().collect()
    }

    /// SHA-256 of the canonical edge list.
    fn digest(&self) -> String {
        experiment::dataset_digest(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} drugs, {} diseases, {} positives)", self.num_drugs(), self.num_diseases(), self.num_positives())
    }
}

#[pyclass(name = "FoldPlan", module = "bmf_py", frozen)]
struct FoldPlan {
    inner: bmf::FoldPlan,
}

#[pymethods]
impl FoldPlan {
    #[new]
    #[pyo3(signature = (dataset, folds = 5, seed = 0))]
    fn new(dataset: &Dataset, folds: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: bmf::make_folds(&dataset.inner, folds, seed).map_err(err)? })
    }

    #[getter]
    fn num_folds(&self) -> usize {
        self.inner.num_folds()
    }

    fn fold_sizes(&self) -> Vec<usize> {
        self.inner.fold_sizes()
    }

    fn fold_positives(&self, fold: usize) -> PyResult<Vec<(usize, usize)>> {
        if fold >= self.inner.num_folds() {
            return Err(PyValueError::new_err(format!("fold {fold} out of range")));
        }
        Ok(self.inner.fold_positives(fold))
    }
}

/// Run configuration; keyword arguments override the defaults.
#[pyclass(name = "Config", module = "bmf_py")]
struct Config {
    inner: RunConfig,
}

fn value_text(v: &Bound<'_, PyAny>) -> PyResult<String> {
    if v.is_instance_of::<PyBool>() {
        return Ok(if v.extract::<bool>()? { "true" } else { "false" }.to_string());
    }
    Ok(v.str()?.to_string())
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = Self { inner: RunConfig::default() };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                cfg.set(&k.extract::<String>()?, &v)?;
            }
        }
        Ok(cfg)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::load(path).map_err(err)? })
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        self.inner.set(key, &value_text(value)?).map_err(err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner.get(key).ok_or_else(|| PyKeyError::new_err(key.to_string()))
    }

    fn to_dict(&self) -> Vec<(String, String)> {
        self.inner
            .to_kv()
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.train_config().map(|_| ()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Config(variant={}, seed={})", self.inner.variant, self.inner.seed)
    }
}

#[pyclass(name = "Model", module = "bmf_py", frozen)]
struct Model {
    inner: bmf::Model,
    #[pyo3(get)]
    epoch_losses: Vec<f64>,
}

#[pymethods]
impl Model {
    /// Trains on every positive of `dataset`.
    #[staticmethod]
    fn train(py: Python<'_>, dataset: &Dataset, config: &Config) -> PyResult<Self> {
        let tc = config.inner.train_config().map_err(err)?;
        let mat = &dataset.inner;
        let report = py.detach(|| bmf::train(mat, &tc)).map_err(err)?;
        Ok(Self { inner: report.model, epoch_losses: report.epoch_losses })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: checkpoint::load(path).map_err(err)?, epoch_losses: Vec::new() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.inner, path).map_err(err)
    }

    #[getter]
    fn architecture(&self) -> String {
        self.inner.architecture().to_string()
    }

    /// Score matrix as nested lists, one row per drug.
    fn score_all(&self, py: Python<'_>, dataset: &Dataset) -> PyResult<Vec<Vec<f64>>> {
        let mat = &dataset.inner;
        let scores = py.detach(|| self.inner.score_all(mat)).map_err(err)?;
        Ok((0..scores.rows()).map(|i| scores.row(i).to_vec()).collect())
    }

    /// Top unassociated diseases for a drug as (rank, disease_id, score).
    #[pyo3(signature = (dataset, drug_id, top = 10))]
    fn predict(&self, dataset: &Dataset, drug_id: &str, top: usize) -> PyResult<Vec<(usize, String, f64)>> {
        let preds = experiment::predict(&self.inner, &dataset.inner, drug_id, top).map_err(err)?;
        Ok(preds.into_iter().map(|p| (p.rank, p.disease_id, p.score)).collect())
    }
}

fn loss_config(alpha: f64, gamma: f64, margin: f64, kind: LossKind) -> PyResult<LossConfig> {
    let cfg = LossConfig { alpha, gamma, margin, kind };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Balanced loss of a batch, averaged over its positives.
#[pyfunction]
#[pyo3(signature = (positives, negatives, alpha = 0.5, gamma = 2.0, margin = 0.01))]
fn bcl_loss(positives: Vec<f64>, negatives: Vec<f64>, alpha: f64, gamma: f64, margin: f64) -> PyResult<f64> {
    let cfg = loss_config(alpha, gamma, margin, LossKind::Bcl)?;
    Ok(batch_loss(&positives, &negatives, &cfg).map_err(err)?.total)
}

/// Binary cross-entropy of a batch, averaged over its positives.
#[pyfunction]
fn bce_loss(positives: Vec<f64>, negatives: Vec<f64>) -> PyResult<f64> {
    let cfg = loss_config(0.5, 0.0, 0.0, LossKind::Bce)?;
    Ok(batch_loss(&positives, &negatives, &cfg).map_err(err)?.total)
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> PyResult<()> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(())
}

#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    check_lengths(&scores, &labels)?;
    Ok(metrics::average_precision(&scores, &labels))
}

#[pyfunction]
fn max_f1(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    check_lengths(&scores, &labels)?;
    Ok(metrics::max_f1(&scores, &labels))
}

/// Cross-validates in memory; returns per-fold AUPR, F1 and hit ratio plus
/// the summary key=value text.
#[pyfunction]
fn cross_validate<'py>(py: Python<'py>, dataset: &Dataset, config: &Config) -> PyResult<Bound<'py, PyDict>> {
    let mat = &dataset.inner;
    let cv = py.detach(|| experiment::cross_validate(mat, &config.inner)).map_err(err)?;
    into_dict(py, &cv)
}

/// Cross-validates and writes the full artifact tree under `out`.
#[pyfunction]
#[pyo3(signature = (dataset, config, out, threads = 0))]
fn run_cv<'py>(py: Python<'py>, dataset: &Dataset, config: &Config, out: PathBuf, threads: usize) -> PyResult<Bound<'py, PyDict>> {
    let mat = &dataset.inner;
    let cv = py.detach(|| experiment::run_cv_on(mat, &config.inner, &out, threads)).map_err(err)?;
    into_dict(py, &cv)
}

fn into_dict<'py>(py: Python<'py>, cv: &experiment::CvOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("aupr", cv.folds.iter().map(|f| f.report.aupr).collect::<Vec<_>>())?;
    d.set_item("f1", cv.folds.iter().map(|f| f.report.f1).collect::<Vec<_>>())?;
    d.set_item("hit_ratio", cv.folds.iter().map(|f| f.report.hit_ratio).collect::<Vec<_>>())?;
    d.set_item("mean_aupr", cv.mean_aupr())?;
    d.set_item("summary", &cv.summary)?;
    Ok(d)
}

#[pymodule]
fn bmf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<FoldPlan>()?;
    m.add_class::<Config>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(bcl_loss, m)?)?;
    m.add_function(wrap_pyfunction!(bce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(max_f1, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cv, m)?)?;
    Ok(())
}
