//! Reverse-mode gradients of the score through the fused model.
//!
//! With `z = W2ᵀ (h ⊙ s) + b3` and `score = sigmoid(z)`:
//!
//! * `∂z/∂W2 = h ⊙ s`, `∂z/∂h = W2 ⊙ s`, `∂z/∂s = W2 ⊙ h`
//! * `h = g d + (1 - g) o` sends `g ∂z/∂h` to the target drug latent and
//!   `(1 - g) / |N| ∂z/∂h` to each pooled neighbor latent; with no neighbors
//!   `h = d` and everything goes to the target drug.
//! * every latent then flows back through its activation into the encoder
//!   rows selected by its binary input.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::{Activation, Encoded, ForwardTrace, Hyperparams, ModelParams};

/// Gradients of `loss` with respect to every parameter, given
/// `dloss/dscore` for the pair recorded in `trace`.
pub fn backward(
    trace: &ForwardTrace,
    dloss_dscore: f64,
    params: &ModelParams,
    hp: &Hyperparams,
) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    accumulate(trace, dloss_dscore, params, hp, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but adds into an existing gradient buffer.
pub fn accumulate(
    trace: &ForwardTrace,
    dloss_dscore: f64,
    params: &ModelParams,
    hp: &Hyperparams,
    grads: &mut ModelParams,
) -> Result<()> {
    let h = params.latent_dim();
    if grads.w1.shape() != params.w1.shape() || grads.v1.shape() != params.v1.shape() || grads.latent_dim() != h {
        return Err(Error::ShapeMismatch("gradient buffer does not match parameters".into()));
    }
    let lens = [
        trace.drug_enc.latent.len(),
        trace.disease_enc.latent.len(),
        trace.fused.len(),
    ];
    if lens.iter().any(|&l| l != h) {
        return Err(Error::ShapeMismatch(format!("trace latents {lens:?} vs latent_dim {h}")));
    }
    accumulate_unchecked(trace, dloss_dscore, params, hp, grads);
    Ok(())
}

pub(crate) fn accumulate_unchecked(
    trace: &ForwardTrace,
    dloss_dscore: f64,
    params: &ModelParams,
    hp: &Hyperparams,
    grads: &mut ModelParams,
) {
    let h = params.latent_dim();
    let s = trace.score;
    let dz = dloss_dscore * s * (1.0 - s);
    if dz == 0.0 {
        return;
    }
    grads.b3 += dz;

    let disease = &trace.disease_enc.latent;
    let mut d_fused = vec![0.0; h];
    let mut d_disease = vec![0.0; h];
    for k in 0..h {
        grads.w2[k] += dz * (trace.fused[k] * disease[k]);
        d_fused[k] = dz * params.w2[k] * disease[k];
        d_disease[k] = dz * params.w2[k] * trace.fused[k];
    }

    encoder_backward(&trace.disease_enc, &d_disease, hp.activation, &mut grads.v1, &mut grads.b2);

    if trace.neighbors.is_empty() {
        encoder_backward(&trace.drug_enc, &d_fused, hp.activation, &mut grads.w1, &mut grads.b1);
        return;
    }
    let g = hp.fusion_weight;
    let d_own: Vec<f64> = d_fused.iter().map(|v| g * v).collect();
    encoder_backward(&trace.drug_enc, &d_own, hp.activation, &mut grads.w1, &mut grads.b1);
    let share = (1.0 - g) / trace.neighbors.len() as f64;
    if share == 0.0 {
        return;
    }
    let d_neighbor: Vec<f64> = d_fused.iter().map(|v| share * v).collect();
    for nb in &trace.neighbors {
        encoder_backward(&nb.encoded, &d_neighbor, hp.activation, &mut grads.w1, &mut grads.b1);
    }
}

fn encoder_backward(enc: &Encoded, d_latent: &[f64], act: Activation, w_grad: &mut DenseMatrix, b_grad: &mut [f64]) {
    let d_pre: Vec<f64> = d_latent
        .iter()
        .zip(enc.pre.iter().zip(&enc.latent))
        .map(|(d, (&pre, &post))| d * act.derivative(pre, post))
        .collect();
    for (b, d) in b_grad.iter_mut().zip(&d_pre) {
        *b += d;
    }
    for &u in &enc.input {
        for (w, d) in w_grad.row_mut(u).iter_mut().zip(&d_pre) {
            *w += d;
        }
    }
}
