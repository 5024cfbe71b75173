//! Flat `key=value` run configuration.
//!
//! Every training, model and loss setting has a key; the CLI exposes the same
//! keys as `--kebab-case` flags. [`RunConfig::to_kv`] emits all keys in a
//! fixed order, which is also the canonical form hashed by grid search.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossKind};
use crate::model::{Activation, Hyperparams, InputMode};
use crate::predictor::Architecture;
use crate::train::{OptimizerKind, TrainConfig};

/// Model/loss lineup: the full model and its ablations, plus the plain
/// factorization baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Bmf,
    BmfOh,
    BmfBce,
    Mf,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Bmf, Variant::BmfOh, Variant::BmfBce, Variant::Mf];

    pub fn input_mode(self) -> InputMode {
        match self {
            Variant::BmfOh => InputMode::OneHot,
            _ => InputMode::Behavior,
        }
    }

    pub fn loss_kind(self) -> LossKind {
        match self {
            Variant::Bmf | Variant::BmfOh => LossKind::Bcl,
            Variant::BmfBce | Variant::Mf => LossKind::Bce,
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Variant::Mf => Architecture::Mf,
            _ => Architecture::Bmf,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Bmf => "bmf",
            Variant::BmfOh => "bmf_oh",
            Variant::BmfBce => "bmf_bce",
            Variant::Mf => "mf",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "bmf" => Ok(Variant::Bmf),
            "bmf_oh" => Ok(Variant::BmfOh),
            "bmf_bce" => Ok(Variant::BmfBce),
            "mf" => Ok(Variant::Mf),
            _ => Err(Error::Config(format!("unknown variant `{s}` (bmf|bmf_oh|bmf_bce|mf)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerName {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub folds: usize,
    pub hr_cutoff: usize,
    pub latent_dim: usize,
    pub neighbor_cap: usize,
    pub fusion_weight: f64,
    pub activation: Activation,
    pub mask_target: bool,
    pub alpha: f64,
    pub gamma: f64,
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerName,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub neg_ratio: usize,
    pub weight_decay: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let (beta1, beta2, adam_eps) = match t.optimizer {
            OptimizerKind::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
            OptimizerKind::Sgd => (0.9, 0.999, 1e-8),
        };
        Self {
            variant: Variant::Bmf,
            seed: t.seed,
            folds: 5,
            hr_cutoff: 10,
            latent_dim: t.hp.latent_dim,
            neighbor_cap: t.hp.neighbor_cap,
            fusion_weight: t.hp.fusion_weight,
            activation: t.hp.activation,
            mask_target: t.hp.mask_target,
            alpha: t.loss.alpha,
            gamma: t.loss.gamma,
            margin: t.loss.margin,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            optimizer: OptimizerName::Adam,
            beta1,
            beta2,
            adam_eps,
            batch_size: t.batch_size,
            neg_ratio: t.neg_ratio,
            weight_decay: t.weight_decay,
        }
    }
}

/// Every accepted key, in canonical output order.
pub const KEYS: [&str; 21] = [
    "variant",
    "seed",
    "folds",
    "hr_cutoff",
    "latent_dim",
    "neighbor_cap",
    "fusion_weight",
    "activation",
    "mask_target",
    "alpha",
    "gamma",
    "margin",
    "epochs",
    "lr",
    "optimizer",
    "beta1",
    "beta2",
    "adam_eps",
    "batch_size",
    "neg_ratio",
    "weight_decay",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

/// Normalizes `--latent-dim`, `latent-dim` and aliases to the canonical key.
pub fn canonical_key(key: &str) -> String {
    let k = key.trim().trim_start_matches("--").replace('-', "_");
    match k.as_str() {
        "learning_rate" => "lr".to_string(),
        "h" => "latent_dim".to_string(),
        _ => k,
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical_key(key);
        let value = value.trim();
        match key.as_str() {
            "variant" => self.variant = value.parse()?,
            "seed" => self.seed = parse(&key, value)?,
            "folds" => self.folds = parse(&key, value)?,
            "hr_cutoff" => self.hr_cutoff = parse(&key, value)?,
            "latent_dim" => self.latent_dim = parse(&key, value)?,
            "neighbor_cap" => self.neighbor_cap = parse(&key, value)?,
            "fusion_weight" => self.fusion_weight = parse(&key, value)?,
            "activation" => self.activation = value.parse()?,
            "mask_target" => self.mask_target = parse_bool(&key, value)?,
            "alpha" => self.alpha = parse(&key, value)?,
            "gamma" => self.gamma = parse(&key, value)?,
            "margin" => self.margin = parse(&key, value)?,
            "epochs" => self.epochs = parse(&key, value)?,
            "lr" => self.learning_rate = parse(&key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "sgd" => OptimizerName::Sgd,
                    "adam" => OptimizerName::Adam,
                    _ => return Err(Error::Config(format!("unknown optimizer `{value}` (sgd|adam)"))),
                }
            }
            "beta1" => self.beta1 = parse(&key, value)?,
            "beta2" => self.beta2 = parse(&key, value)?,
            "adam_eps" => self.adam_eps = parse(&key, value)?,
            "batch_size" => self.batch_size = parse(&key, value)?,
            "neg_ratio" => self.neg_ratio = parse(&key, value)?,
            "weight_decay" => self.weight_decay = parse(&key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let key = canonical_key(key);
        let v = match key.as_str() {
            "variant" => self.variant.to_string(),
            "seed" => self.seed.to_string(),
            "folds" => self.folds.to_string(),
            "hr_cutoff" => self.hr_cutoff.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "neighbor_cap" => self.neighbor_cap.to_string(),
            "fusion_weight" => self.fusion_weight.to_string(),
            "activation" => self.activation.to_string(),
            "mask_target" => self.mask_target.to_string(),
            "alpha" => self.alpha.to_string(),
            "gamma" => self.gamma.to_string(),
            "margin" => self.margin.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.learning_rate.to_string(),
            "optimizer" => match self.optimizer {
                OptimizerName::Sgd => "sgd".into(),
                OptimizerName::Adam => "adam".into(),
            },
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "neg_ratio" => self.neg_ratio.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse { line: lineno + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_kv(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("canonical key")))
            .collect()
    }

    /// Training configuration with the variant's input mode, loss and
    /// architecture applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let optimizer = match self.optimizer {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Adam => OptimizerKind::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
        };
        let cfg = TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            optimizer,
            batch_size: self.batch_size,
            neg_ratio: self.neg_ratio,
            seed: self.seed,
            loss: LossConfig {
                alpha: self.alpha,
                gamma: self.gamma,
                margin: self.margin,
                kind: self.variant.loss_kind(),
            },
            hp: Hyperparams {
                latent_dim: self.latent_dim,
                neighbor_cap: self.neighbor_cap,
                fusion_weight: self.fusion_weight,
                activation: self.activation,
                input_mode: self.variant.input_mode(),
                mask_target: self.mask_target,
            },
            weight_decay: self.weight_decay,
            architecture: self.variant.architecture(),
        };
        cfg.validate()?;
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.hr_cutoff == 0 {
            return Err(Error::Config("hr_cutoff must be at least 1".into()));
        }
        Ok(cfg)
    }
}
