use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bmf::checkpoint;
use bmf::experiment::{self, load_dataset, DatasetFormat};
use bmf::synthetic::bundled_block_matrix;
use bmf::train::{full_grid, GridSpec};
use bmf::{AssociationMatrix, Error, Result, RunConfig};
use clap::{Args, Parser, Subcommand};

const OUTPUT_ROOT_ENV: &str = "BMF_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "bmf", version, about = "Drug-disease link prediction with balanced matrix factorization")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate and write per-fold reports plus a summary.
    Cv(RunArgs),
    /// Train on the full dataset and write a checkpoint.
    Train(RunArgs),
    /// Rank unassociated diseases for one drug as CSV on stdout.
    Predict(PredictArgs),
    /// Grid search over hyperparameters scored by mean fold AUPR.
    Grid(GridArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Edge list (drug<TAB>disease) or dense 0/1 matrix.
    #[arg(long, required_unless_present = "synthetic")]
    dataset: Option<PathBuf>,
    /// Use the bundled synthetic block matrix instead of a file.
    #[arg(long, conflicts_with = "dataset")]
    synthetic: bool,
    /// auto, edges or dense.
    #[arg(long, default_value = "auto")]
    format: DatasetFormat,
    /// Drop drugs and diseases without any association.
    #[arg(long)]
    prune: bool,
}

impl DataArgs {
    fn load(&self) -> Result<AssociationMatrix> {
        match &self.dataset {
            Some(p) => load_dataset(p, self.format, self.prune),
            None => Ok(bundled_block_matrix()),
        }
    }
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bmf, bmf_oh, bmf_bce or mf.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    hr_cutoff: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    neighbor_cap: Option<usize>,
    #[arg(long)]
    fusion_weight: Option<f64>,
    /// relu or sigmoid.
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    mask_target: Option<bool>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    neg_ratio: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        macro_rules! collect {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    out.push((stringify!($field).to_string(), v.to_string()));
                })*
            };
        }
        collect!(
            variant, seed, folds, hr_cutoff, latent_dim, neighbor_cap, fusion_weight, activation, mask_target,
            alpha, gamma, margin, epochs, lr, optimizer, beta1, beta2, adam_eps, batch_size, neg_ratio,
            weight_decay
        );
        out
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for (k, v) in self.overrides() {
            cfg.set(&k, &v)?;
        }
        cfg.train_config()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory; defaults to a run-named directory under $BMF_OUTPUT_ROOT (or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every hardware thread.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint written by `train` or `cv`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Drug id as it appears in the dataset.
    #[arg(long)]
    drug: String,
    /// Number of diseases to list.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Axes as `key=v1,v2,...` lines; defaults to the full 7200-cell grid.
    #[arg(long)]
    grid: Option<PathBuf>,
}

fn output_dir(explicit: &Option<PathBuf>, command: &str, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = explicit {
        return p.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{command}_{}_seed{}", cfg.variant, cfg.seed))
}

fn report_out(out: &Path) {
    eprintln!("outputs written to {}", out.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cv(args) => {
            let cfg = args.config.resolve()?;
            let mat = args.data.load()?;
            let out = output_dir(&args.out, "cv", &cfg);
            let cv = experiment::run_cv_on(&mat, &cfg, &out, args.threads)?;
            for f in &cv.folds {
                eprintln!("fold {}: aupr={:.4} f1={:.4} hr@{}={:.4}", f.fold, f.report.aupr, f.report.f1, cfg.hr_cutoff, f.report.hit_ratio);
            }
            eprintln!("mean aupr={:.4}", cv.mean_aupr());
            report_out(&out);
        }
        Command::Train(args) => {
            let cfg = args.config.resolve()?;
            let mat = args.data.load()?;
            let out = output_dir(&args.out, "train", &cfg);
            let report = experiment::run_train_on(&mat, &cfg, &out, args.threads)?;
            if let Some(l) = report.epoch_losses.last() {
                eprintln!("final loss {l:.6} after {} epochs", report.epoch_losses.len());
            }
            report_out(&out);
        }
        Command::Predict(args) => {
            let mat = args.data.load()?;
            let model = checkpoint::load(&args.checkpoint)?;
            let preds = experiment::predict(&model, &mat, &args.drug, args.top)?;
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            experiment::write_predictions(&preds, &mut lock)
                .and_then(|_| lock.flush())
                .map_err(|e| Error::InvalidData(format!("cannot write predictions: {e}")))?;
        }
        Command::Grid(args) => {
            let spec = match &args.grid {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| Error::InvalidData(format!("cannot read {}: {e}", p.display())))?;
                    GridSpec::parse(&text)?
                }
                None => full_grid(),
            };
            let run = &args.run;
            let cfg = run.config.resolve()?;
            let mat = run.data.load()?;
            let out = output_dir(&run.out, "grid", &cfg);
            eprintln!("grid of {} cells", spec.cardinality());
            let outcome = experiment::run_grid_on(&mat, &cfg, &spec, &out, run.threads)?;
            let best = outcome.best_cell();
            eprintln!("best cell {} mean aupr={:.4}", best.index, best.mean_aupr);
            report_out(&out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
