use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Sgd => f.write_str("sgd"),
            OptimizerKind::Adam { .. } => f.write_str("adam"),
        }
    }
}

/// First-order optimizer over a fixed list of flat tensors. L2 weight decay
/// is folded into the gradient.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    weight_decay: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, weight_decay: f64, sizes: &[usize]) -> Self {
        let state = || sizes.iter().map(|&n| vec![0.0; n]).collect();
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (state(), state()),
        };
        Self { kind, learning_rate, weight_decay, step: 0, first, second }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::ShapeMismatch("optimizer parameters and gradients differ".into()));
        }
        self.step = self.step.saturating_add(1);
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, &dw) in p.iter_mut().zip(g) {
                        *w -= lr * (dw + wd * *w);
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (t, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.first[t], &mut self.second[t]);
                    if m.len() != p.len() {
                        return Err(Error::ShapeMismatch("optimizer state does not match tensor".into()));
                    }
                    for k in 0..p.len() {
                        let dw = g[k] + wd * p[k];
                        m[k] = beta1 * m[k] + (1.0 - beta1) * dw;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * dw * dw;
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
