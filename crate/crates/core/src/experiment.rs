//! Reproducible experiments on disk: cross-validation, full-data training,
//! prediction and grid search.
//!
//! `cv` layout:
//!
//! ```text
//! <out>/config.kv        resolved configuration
//! <out>/fold_plan.tsv
//! <out>/fold_<k>/checkpoint
//! <out>/fold_<k>/pr_curve.csv
//! <out>/fold_<k>/confusion.csv
//! <out>/fold_<k>/report.kv
//! <out>/summary.kv
//! <out>/timing.kv        wall-clock seconds, the only non-deterministic file
//! ```
//!
//! A failed fold leaves `fold_<k>/FAILED` and the run leaves `<out>/FAILED`
//! instead of `summary.kv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{load_dense_matrix, load_edge_list, make_folds, prune_empty, training_view, AssociationMatrix, FoldPlan};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::predictor::Model;
use crate::train::{evaluate_cell, select_best, train, CellResult, GridOutcome, GridSpec, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// Edge list if the first data line has a tab, dense matrix otherwise.
    #[default]
    Auto,
    EdgeList,
    Dense,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(DatasetFormat::Auto),
            "edges" | "edge_list" | "tsv" => Ok(DatasetFormat::EdgeList),
            "dense" | "matrix" => Ok(DatasetFormat::Dense),
            _ => Err(Error::Config(format!("unknown dataset format `{s}` (auto|edges|dense)"))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat, prune: bool) -> Result<AssociationMatrix> {
    let path = path.as_ref();
    let format = match format {
        DatasetFormat::Auto => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let first = text.lines().map(str::trim_end).find(|l| !l.trim().is_empty() && !l.starts_with('#'));
            if first.is_some_and(|l| l.contains('\t')) {
                DatasetFormat::EdgeList
            } else {
                DatasetFormat::Dense
            }
        }
        f => f,
    };
    let mat = match format {
        DatasetFormat::Dense => load_dense_matrix(path)?,
        _ => load_edge_list(path)?,
    };
    if prune {
        prune_empty(&mat)
    } else {
        Ok(mat)
    }
}

/// SHA-256 of the canonical edge list.
pub fn dataset_digest(mat: &AssociationMatrix) -> String {
    let mut buf = Vec::new();
    mat.write_edge_list(&mut buf).expect("writing to memory");
    hex::encode(Sha256::digest(&buf))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    pub prune: bool,
    pub config_path: Option<PathBuf>,
    /// Applied after the config file, in order.
    pub overrides: Vec<(String, String)>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every hardware thread.
    pub threads: usize,
}

impl ExperimentManifest {
    pub fn new(dataset: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            format: DatasetFormat::Auto,
            prune: false,
            config_path: None,
            overrides: Vec::new(),
            out_dir: out_dir.into(),
            threads: 0,
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config_path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.train_config()?;
        Ok(cfg)
    }

    pub fn load_dataset(&self) -> Result<AssociationMatrix> {
        load_dataset(&self.dataset, self.format, self.prune)
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents` beside `path` and renames it into place.
fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_file(&tmp, contents)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub train_positives: usize,
    pub test_positives: usize,
    pub report: MetricsReport,
    pub training: TrainReport,
}

impl FoldResult {
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fold={}", self.fold);
        let _ = writeln!(s, "train_positives={}", self.train_positives);
        let _ = writeln!(s, "test_positives={}", self.test_positives);
        let _ = writeln!(s, "final_loss={}", self.training.epoch_losses.last().copied().unwrap_or(f64::NAN));
        s.push_str(&self.report.to_kv());
        s
    }
}

/// Trains on every fold but `fold` and evaluates on `fold`.
pub fn run_fold(mat: &AssociationMatrix, plan: &FoldPlan, cfg: &RunConfig, fold: usize) -> Result<FoldResult> {
    let tc = cfg.train_config()?;
    let view = training_view(mat, plan, fold)?;
    let test = plan.fold_positives(fold);
    let training = train(&view, &tc)?;
    let scores = training.model.score_all(&view)?;
    let report = evaluate(&scores, &view, &test, cfg.hr_cutoff)?;
    Ok(FoldResult { fold, train_positives: view.num_positives(), test_positives: test.len(), report, training })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summary_kv(mat: &AssociationMatrix, cfg: &RunConfig, folds: &[FoldResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dataset_sha256={}", dataset_digest(mat));
    let _ = writeln!(s, "num_drugs={}", mat.num_drugs());
    let _ = writeln!(s, "num_diseases={}", mat.num_diseases());
    let _ = writeln!(s, "num_positives={}", mat.num_positives());
    let _ = writeln!(s, "sparsity={}", mat.sparsity());
    let _ = writeln!(s, "input_mode={}", cfg.variant.input_mode());
    let _ = writeln!(s, "loss={}", cfg.variant.loss_kind());
    let _ = writeln!(s, "architecture={}", cfg.variant.architecture());
    s.push_str(&cfg.to_kv());
    for f in folds {
        let _ = writeln!(s, "fold_{}.aupr={}", f.fold, f.report.aupr);
        let _ = writeln!(s, "fold_{}.f1={}", f.fold, f.report.f1);
        let _ = writeln!(s, "fold_{}.hit_ratio={}", f.fold, f.report.hit_ratio);
    }
    for (name, get) in [
        ("aupr", (|r: &MetricsReport| r.aupr) as fn(&MetricsReport) -> f64),
        ("f1", |r| r.f1),
        ("hit_ratio", |r| r.hit_ratio),
    ] {
        let xs: Vec<f64> = folds.iter().map(|f| get(&f.report)).collect();
        let (mean, std) = mean_std(&xs);
        let _ = writeln!(s, "mean_{name}={mean}");
        let _ = writeln!(s, "std_{name}={std}");
    }
    s
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub summary: String,
}

impl CvOutcome {
    pub fn mean_aupr(&self) -> f64 {
        mean_std(&self.folds.iter().map(|f| f.report.aupr).collect::<Vec<_>>()).0
    }
}

/// Cross-validation without touching the filesystem.
pub fn cross_validate(mat: &AssociationMatrix, cfg: &RunConfig) -> Result<CvOutcome> {
    cfg.train_config()?;
    let plan = make_folds(mat, cfg.folds, cfg.seed)?;
    let folds = (0..plan.num_folds())
        .into_par_iter()
        .map(|k| run_fold(mat, &plan, cfg, k))
        .collect::<Result<Vec<_>>>()?;
    let summary = summary_kv(mat, cfg, &folds);
    Ok(CvOutcome { plan, folds, summary })
}

fn write_fold(dir: &Path, fold: &FoldResult) -> Result<()> {
    create_dir(dir)?;
    checkpoint::save(&fold.training.model, dir.join("checkpoint"))?;
    let mut pr = Vec::new();
    fold.report.write_pr_csv(&mut pr).expect("writing to memory");
    write_file(&dir.join("pr_curve.csv"), pr)?;
    let mut cm = Vec::new();
    fold.report.write_confusion_csv(&mut cm).expect("writing to memory");
    write_file(&dir.join("confusion.csv"), cm)?;
    write_file(&dir.join("report.kv"), fold.to_kv())
}

fn timing_kv(items: impl IntoIterator<Item = (String, Duration)>) -> String {
    items.into_iter().map(|(k, d)| format!("{k}={}\n", d.as_secs_f64())).collect()
}

/// Runs cross-validation on `mat` and writes every artifact under `out`.
pub fn run_cv_on(mat: &AssociationMatrix, cfg: &RunConfig, out: &Path, threads: usize) -> Result<CvOutcome> {
    create_dir(out)?;
    let _ = fs::remove_file(out.join("FAILED"));
    let result = with_pool(threads, || -> Result<CvOutcome> {
        cfg.train_config()?;
        write_file(&out.join("config.kv"), cfg.to_kv())?;
        let plan = make_folds(mat, cfg.folds, cfg.seed)?;
        let mut tsv = Vec::new();
        plan.write_tsv(mat, &mut tsv).expect("writing to memory");
        write_file(&out.join("fold_plan.tsv"), tsv)?;
        let results: Vec<Result<FoldResult>> = (0..plan.num_folds())
            .into_par_iter()
            .map(|k| {
                let dir = out.join(format!("fold_{k}"));
                let res = run_fold(mat, &plan, cfg, k).and_then(|f| write_fold(&dir, &f).map(|_| f));
                if let Err(e) = &res {
                    let _ = create_dir(&dir).and_then(|_| write_file(&dir.join("FAILED"), format!("{e}\n")));
                } else {
                    let _ = fs::remove_file(dir.join("FAILED"));
                }
                res
            })
            .collect();
        let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
        let summary = summary_kv(mat, cfg, &folds);
        write_file(&out.join("summary.kv"), &summary)?;
        let timing = folds.iter().map(|f| (format!("fold_{}.seconds", f.fold), f.training.wall_clock));
        write_file(&out.join("timing.kv"), timing_kv(timing))?;
        Ok(CvOutcome { plan, folds, summary })
    })?;
    if let Err(e) = &result {
        let _ = fs::remove_file(out.join("summary.kv"));
        let _ = write_file(&out.join("FAILED"), format!("{e}\n"));
    }
    result
}

pub fn run_cv(manifest: &ExperimentManifest) -> Result<CvOutcome> {
    let cfg = manifest.run_config()?;
    let mat = manifest.load_dataset()?;
    run_cv_on(&mat, &cfg, &manifest.out_dir, manifest.threads)
}

/// Trains on the whole matrix and writes `checkpoint`, `config.kv` and
/// `train.kv` (per-epoch losses) under `out`.
pub fn run_train_on(mat: &AssociationMatrix, cfg: &RunConfig, out: &Path, threads: usize) -> Result<TrainReport> {
    let tc = cfg.train_config()?;
    create_dir(out)?;
    let report = with_pool(threads, || train(mat, &tc))??;
    write_file(&out.join("config.kv"), cfg.to_kv())?;
    checkpoint::save(&report.model, out.join("checkpoint"))?;
    let mut s = String::new();
    let _ = writeln!(s, "dataset_sha256={}", dataset_digest(mat));
    let _ = writeln!(s, "num_drugs={}", mat.num_drugs());
    let _ = writeln!(s, "num_diseases={}", mat.num_diseases());
    let _ = writeln!(s, "num_positives={}", mat.num_positives());
    for (e, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(s, "epoch_{e}.loss={l}");
    }
    write_file(&out.join("train.kv"), s)?;
    write_file(&out.join("timing.kv"), timing_kv([("train.seconds".to_string(), report.wall_clock)]))?;
    Ok(report)
}

pub fn run_train(manifest: &ExperimentManifest) -> Result<TrainReport> {
    let cfg = manifest.run_config()?;
    let mat = manifest.load_dataset()?;
    run_train_on(&mat, &cfg, &manifest.out_dir, manifest.threads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub rank: usize,
    pub disease_id: String,
    pub score: f64,
}

/// Up to `nearest` known drug ids closest to `id` by edit distance.
pub fn nearest_drug_ids(mat: &AssociationMatrix, id: &str, nearest: usize) -> Vec<String> {
    let mut ids: Vec<(usize, &String)> = mat.drug_ids().iter().map(|d| (strsim::levenshtein(id, d), d)).collect();
    ids.sort();
    ids.into_iter().take(nearest).map(|(_, d)| d.clone()).collect()
}

/// The `top` highest-scoring diseases not already associated with `drug_id`,
/// ties broken by disease index.
pub fn predict(model: &Model, mat: &AssociationMatrix, drug_id: &str, top: usize) -> Result<Vec<Prediction>> {
    let drug = mat.drug_index(drug_id).ok_or_else(|| Error::UnknownDrug {
        id: drug_id.to_string(),
        nearest: nearest_drug_ids(mat, drug_id, 3).join(", "),
    })?;
    let scores = model.score_all(mat)?;
    let mut cands: Vec<(usize, f64)> = (0..mat.num_diseases())
        .filter(|&j| !mat.contains(drug, j))
        .map(|j| (j, scores.get(drug, j)))
        .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(cands
        .into_iter()
        .take(top)
        .enumerate()
        .map(|(r, (j, score))| Prediction { rank: r + 1, disease_id: mat.disease_ids()[j].clone(), score })
        .collect())
}

/// `rank,disease_id,score`
pub fn write_predictions<W: Write>(preds: &[Prediction], mut w: W) -> std::io::Result<()> {
    writeln!(w, "rank,disease_id,score")?;
    for p in preds {
        writeln!(w, "{},{},{}", p.rank, p.disease_id, p.score)?;
    }
    Ok(())
}

/// Hash identifying a grid cell's work: the dataset and the full resolved
/// configuration.
pub fn cell_hash(dataset_digest: &str, cfg: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(dataset_digest.as_bytes());
    h.update(b"\n");
    h.update(cfg.to_kv().as_bytes());
    hex::encode(h.finalize())
}

fn grid_row(spec: &GridSpec, hash: &str, cell: &CellResult) -> String {
    let mut s = format!("{},{}", cell.index, hash);
    for (_, v) in spec.cell(cell.index) {
        let _ = write!(s, ",{v}");
    }
    let folds: Vec<String> = cell.fold_aupr.iter().map(f64::to_string).collect();
    let status = if cell.error.is_some() { "failed" } else { "ok" };
    let _ = write!(s, ",{},{},{status}", cell.mean_aupr, folds.join(";"));
    s
}

fn grid_header(spec: &GridSpec) -> String {
    let axes: Vec<&str> = spec.axes.iter().map(|(k, _)| k.as_str()).collect();
    format!("# cells={}\ncell,hash,{},mean_aupr,fold_aupr,status\n", spec.cardinality(), axes.join(","))
}

/// Completed cells of an existing table, keyed by hash.
fn read_grid_table(path: &Path) -> Result<BTreeMap<String, (f64, Vec<f64>)>> {
    let mut done = BTreeMap::new();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(Error::io(path, e)),
    };
    for line in text.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 || fields[fields.len() - 1] != "ok" {
            continue;
        }
        let n = fields.len();
        let folds: Option<Vec<f64>> = fields[n - 2].split(';').map(|v| v.parse().ok()).collect();
        if let (Ok(mean), Some(folds)) = (fields[n - 3].parse::<f64>(), folds) {
            done.insert(fields[1].to_string(), (mean, folds));
        }
    }
    Ok(done)
}

/// Grid search writing `grid_table.csv` (rewritten in cell order after
/// each batch of cells, so an interrupted run resumes where it stopped) and
/// `best_config.kv`.
pub fn run_grid_on(
    mat: &AssociationMatrix,
    base: &RunConfig,
    spec: &GridSpec,
    out: &Path,
    threads: usize,
) -> Result<GridOutcome> {
    spec.validate()?;
    base.train_config()?;
    create_dir(out)?;
    let table = out.join("grid_table.csv");
    let previous = read_grid_table(&table)?;
    let digest = dataset_digest(mat);
    let plan = make_folds(mat, base.folds, base.seed)?;

    let configs = (0..spec.cardinality()).map(|i| spec.cell_config(base, i)).collect::<Result<Vec<_>>>()?;
    let hashes: Vec<String> = configs.iter().map(|c| cell_hash(&digest, c)).collect();
    let mut cells: Vec<Option<CellResult>> = configs
        .iter()
        .zip(&hashes)
        .enumerate()
        .map(|(i, (c, h))| {
            previous.get(h).map(|(_, folds)| CellResult::from_folds(i, c.clone(), folds.clone()))
        })
        .collect();
    let skipped = cells.iter().filter(|c| c.is_some()).count();
    if skipped > 0 {
        log::info!("resuming grid: {skipped} of {} cells already done", cells.len());
    }

    let write_table = |cells: &[Option<CellResult>]| -> Result<()> {
        let mut s = grid_header(spec);
        for c in cells.iter().flatten() {
            s.push_str(&grid_row(spec, &hashes[c.index], c));
            s.push('\n');
        }
        write_atomic(&table, s)
    };

    let pending: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].is_none()).collect();
    with_pool(threads, || -> Result<()> {
        let batch = rayon::current_num_threads().max(1);
        for chunk in pending.chunks(batch) {
            let done: Vec<CellResult> = chunk
                .par_iter()
                .map(|&i| match evaluate_cell(mat, &plan, &configs[i]) {
                    Ok(folds) => CellResult::from_folds(i, configs[i].clone(), folds),
                    Err(e) => {
                        log::warn!("grid cell {i} failed: {e}");
                        CellResult::failed(i, configs[i].clone(), &e)
                    }
                })
                .collect();
            for c in done {
                let i = c.index;
                cells[i] = Some(c);
            }
            write_table(&cells)?;
        }
        Ok(())
    })??;
    if pending.is_empty() {
        write_table(&cells)?;
    }

    let cells: Vec<CellResult> = cells.into_iter().map(|c| c.expect("every cell evaluated")).collect();
    let best = select_best(&cells).ok_or_else(|| Error::Config("every grid cell failed".into()))?;
    let b = &cells[best];
    let mut s = format!("# cell={} mean_aupr={}\n", b.index, b.mean_aupr);
    s.push_str(&b.config.to_kv());
    write_file(&out.join("best_config.kv"), s)?;
    Ok(GridOutcome { cells, best })
}

pub fn run_grid(manifest: &ExperimentManifest, spec: &GridSpec) -> Result<GridOutcome> {
    let cfg = manifest.run_config()?;
    let mat = manifest.load_dataset()?;
    run_grid_on(&mat, &cfg, spec, &manifest.out_dir, manifest.threads)
}

/// Reloads a fold plan written by `cv`.
pub fn read_fold_plan(mat: &AssociationMatrix, path: impl AsRef<Path>) -> Result<FoldPlan> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    FoldPlan::read_tsv(mat, BufReader::new(f))
}
