//! Balanced contrastive loss and the binary cross-entropy baseline.
//!
//! For a positive pair with score `p` and its sampled negatives `q_u`:
//!
//! ```text
//! L = -α (1 - p)^γ ln p  +  Σ_u (1 - α) q_u^γ max(0, -ln(1 - q_u + c))
//! ```
//!
//! Negatives scored at or below the margin `c` drop out of both the loss and
//! the gradient. Every function returns the loss together with its exact
//! derivative with respect to the score.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Scores are clamped to `[EPS, 1 - EPS]` before taking logarithms.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Bcl,
    Bce,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Bcl => "bcl",
            LossKind::Bce => "bce",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bcl" => Ok(LossKind::Bcl),
            "bce" => Ok(LossKind::Bce),
            _ => Err(Error::Config(format!("unknown loss `{s}` (bcl|bce)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight of the positive term; negatives get `1 - alpha`.
    pub alpha: f64,
    /// Focusing exponent.
    pub gamma: f64,
    /// Margin below which negatives are ignored.
    pub margin: f64,
    pub kind: LossKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 2.0,
            margin: 0.01,
            kind: LossKind::Bcl,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma {} must be finite and >= 0", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::Config(format!("margin {} outside [0, 1)", self.margin)));
        }
        Ok(())
    }
}

fn clamp_score(score: f64) -> Result<f64> {
    if !score.is_finite() {
        return Err(Error::NonFinite(format!("score {score}")));
    }
    Ok(score.clamp(SCORE_EPS, 1.0 - SCORE_EPS))
}

/// `x^γ` with `x^0 = 1` and `x^1 = x` exactly.
fn pow(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else if gamma == 1.0 {
        x
    } else if gamma == 2.0 {
        x * x
    } else {
        x.powf(gamma)
    }
}

/// `γ x^(γ-1)`, zero when γ = 0.
fn dpow(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else if gamma == 1.0 {
        1.0
    } else if gamma == 2.0 {
        2.0 * x
    } else {
        gamma * x.powf(gamma - 1.0)
    }
}

/// `-α (1 - p)^γ ln p` and its derivative in `p`.
pub fn bcl_positive(score: f64, cfg: &LossConfig) -> Result<(f64, f64)> {
    let p = clamp_score(score)?;
    let q = 1.0 - p;
    let ln_p = p.ln();
    let loss = -cfg.alpha * pow(q, cfg.gamma) * ln_p;
    let grad = cfg.alpha * (dpow(q, cfg.gamma) * ln_p - pow(q, cfg.gamma) / p);
    Ok((loss, grad))
}

/// `(1 - α) p^γ max(0, -ln(1 - p + c))` and its derivative in `p`. Scores at
/// or below the margin give exactly `(0, 0)`.
pub fn bcl_negative(score: f64, cfg: &LossConfig) -> Result<(f64, f64)> {
    if !score.is_finite() {
        return Err(Error::NonFinite(format!("score {score}")));
    }
    if score <= cfg.margin {
        return Ok((0.0, 0.0));
    }
    let p = clamp_score(score)?;
    let arg = 1.0 - p + cfg.margin;
    if arg >= 1.0 {
        return Ok((0.0, 0.0));
    }
    let hinge = -arg.ln();
    let w = 1.0 - cfg.alpha;
    let loss = w * pow(p, cfg.gamma) * hinge;
    let grad = w * (dpow(p, cfg.gamma) * hinge + pow(p, cfg.gamma) / arg);
    Ok((loss, grad))
}

/// `-ln p`.
pub fn bce_positive(score: f64) -> Result<(f64, f64)> {
    let p = clamp_score(score)?;
    Ok((-p.ln(), -1.0 / p))
}

/// `-ln(1 - p)`.
pub fn bce_negative(score: f64) -> Result<(f64, f64)> {
    let p = clamp_score(score)?;
    Ok((-(1.0 - p).ln(), 1.0 / (1.0 - p)))
}

pub fn positive_term(score: f64, cfg: &LossConfig) -> Result<(f64, f64)> {
    match cfg.kind {
        LossKind::Bcl => bcl_positive(score, cfg),
        LossKind::Bce => bce_positive(score),
    }
}

pub fn negative_term(score: f64, cfg: &LossConfig) -> Result<(f64, f64)> {
    match cfg.kind {
        LossKind::Bcl => bcl_negative(score, cfg),
        LossKind::Bce => bce_negative(score),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub positive_grads: Vec<f64>,
    pub negative_grads: Vec<f64>,
}

/// Sums the per-sample terms over positives and negatives (no averaging).
pub fn batch_loss(positives: &[f64], negatives: &[f64], cfg: &LossConfig) -> Result<BatchLoss> {
    if positives.is_empty() {
        return Err(Error::InvalidData("loss batch needs at least one positive".into()));
    }
    let mut total = 0.0;
    let mut positive_grads = Vec::with_capacity(positives.len());
    for &p in positives {
        let (l, g) = positive_term(p, cfg)?;
        total += l;
        positive_grads.push(g);
    }
    let mut negative_grads = Vec::with_capacity(negatives.len());
    for &q in negatives {
        let (l, g) = negative_term(q, cfg)?;
        total += l;
        negative_grads.push(g);
    }
    Ok(BatchLoss { total, positive_grads, negative_grads })
}
