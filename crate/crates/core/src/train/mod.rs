//! Mini-batch training of a [`Model`] against the balanced contrastive loss
//! (or BCE), with per-epoch negative resampling.

mod backward;
mod grid;
mod optim;

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use backward::{accumulate, backward};
pub use grid::{evaluate_cell, grid_search, full_grid, select_best, CellResult, GridOutcome, GridSpec};
pub use optim::{Optimizer, OptimizerKind};

use crate::data::{AssociationMatrix, Label, SamplePair};
use crate::error::{Error, Result};
use crate::loss::{batch_loss, negative_term, LossConfig};
use crate::model::{forward_unchecked, Hyperparams};
use crate::predictor::{Architecture, Model, Weights};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Positives per mini-batch; each carries its own negatives.
    pub batch_size: usize,
    /// Negatives drawn per positive.
    pub neg_ratio: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub hp: Hyperparams,
    pub weight_decay: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::default(),
            batch_size: 32,
            neg_ratio: 5,
            seed: 0,
            loss: LossConfig::default(),
            hp: Hyperparams::default(),
            weight_decay: 0.0,
            architecture: Architecture::Bmf,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.neg_ratio == 0 {
            return Err(Error::Config("neg_ratio must be at least 1".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps.is_nan() || eps <= 0.0 {
                return Err(Error::Config("adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
            }
        }
        self.loss.validate()?;
        self.hp.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean loss per positive, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub model: Model,
    pub wall_clock: Duration,
    pub seed: u64,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Loss of one sample, with its gradient added into `grads`.
pub fn sample_gradient(
    model: &Model,
    mat: &AssociationMatrix,
    sample: &SamplePair,
    loss: &LossConfig,
    grads: &mut Weights,
) -> Result<f64> {
    let hp = &model.hp;
    match (&model.weights, grads) {
        (Weights::Bmf(p), Weights::Bmf(g)) => {
            let mut traces = Vec::with_capacity(sample.negatives.len() + 1);
            traces.push(forward_unchecked(p, hp, mat, sample.drug, sample.disease));
            if sample.label == Label::Negative {
                let (l, d) = negative_term(traces[0].score, loss)?;
                backward::accumulate_unchecked(&traces[0], d, p, hp, g);
                return Ok(l);
            }
            for &u in &sample.negatives {
                traces.push(forward_unchecked(p, hp, mat, sample.drug, u));
            }
            let neg: Vec<f64> = traces[1..].iter().map(|t| t.score).collect();
            let bl = batch_loss(&[traces[0].score], &neg, loss)?;
            let grads_iter = bl.positive_grads.iter().chain(&bl.negative_grads);
            for (t, &d) in traces.iter().zip(grads_iter) {
                backward::accumulate_unchecked(t, d, p, hp, g);
            }
            Ok(bl.total)
        }
        (Weights::Mf(p), Weights::Mf(g)) => {
            let s = p.score(sample.drug, sample.disease);
            if sample.label == Label::Negative {
                let (l, d) = negative_term(s, loss)?;
                p.accumulate(sample.drug, sample.disease, s, d, g);
                return Ok(l);
            }
            let neg: Vec<f64> = sample.negatives.iter().map(|&u| p.score(sample.drug, u)).collect();
            let bl = batch_loss(&[s], &neg, loss)?;
            p.accumulate(sample.drug, sample.disease, s, bl.positive_grads[0], g);
            for (&u, (&q, &d)) in sample.negatives.iter().zip(neg.iter().zip(&bl.negative_grads)) {
                p.accumulate(sample.drug, u, q, d, g);
            }
            Ok(bl.total)
        }
        _ => Err(Error::ShapeMismatch("gradient buffer architecture differs from model".into())),
    }
}

/// Summed loss of `samples` and its gradient with respect to every weight.
pub fn objective(
    model: &Model,
    mat: &AssociationMatrix,
    samples: &[SamplePair],
    loss: &LossConfig,
) -> Result<(f64, Weights)> {
    model.check_matrix(mat)?;
    let mut grads = model.zeros_like();
    let mut total = 0.0;
    for s in samples {
        mat.check_drug(s.drug)?;
        mat.check_disease(s.disease)?;
        for &u in &s.negatives {
            mat.check_disease(u)?;
        }
        total += sample_gradient(model, mat, s, loss, &mut grads)?;
    }
    Ok((total, grads))
}

/// Trains from a fresh initialization seeded by `cfg.seed`.
pub fn train(mat: &AssociationMatrix, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let model = Model::init(cfg.architecture, &cfg.hp, mat.num_drugs(), mat.num_diseases(), cfg.seed)?;
    train_from(mat, cfg, model)
}

/// Trains an existing model in place of a fresh one.
pub fn train_from(mat: &AssociationMatrix, cfg: &TrainConfig, mut model: Model) -> Result<TrainReport> {
    cfg.validate()?;
    model.check_matrix(mat)?;
    let start = Instant::now();
    let positives: Vec<(usize, usize)> = mat.positives().collect();
    let sizes: Vec<usize> = model.weights.tensors().iter().map(|t| t.len()).collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay, &sizes);
    let mut grads = model.zeros_like();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch));
        let mut order = positives.clone();
        order.shuffle(&mut rng);
        let samples = order
            .iter()
            .map(|&(i, j)| SamplePair::positive(mat, i, j, cfg.neg_ratio, &mut rng))
            .collect::<Result<Vec<_>>>()?;

        let mut total = 0.0;
        for batch in samples.chunks(cfg.batch_size) {
            for t in grads.tensors_mut() {
                t.fill(0.0);
            }
            for s in batch {
                total += sample_gradient(&model, mat, s, &cfg.loss, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= scale);
            }
            opt.step(model.weights.tensors_mut(), grads.tensors())?;
        }
        let mean = total / positives.len() as f64;
        if !mean.is_finite() || !model.weights.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::debug!("epoch {epoch}: loss {mean}");
        epoch_losses.push(mean);
    }
    Ok(TrainReport { epoch_losses, model, wall_clock: start.elapsed(), seed: cfg.seed })
}
