//! Behavior-vector encoders, neighbor fusion and the scoring head.
//!
//! For a pair `(i, j)` the drug latent `d_i = f(W1ᵀ r_i + b1)` is computed
//! from the drug's association row and the disease latent
//! `s_j = f(V1ᵀ c_j + b2)` from the disease's association column. Drugs that
//! also treat `j` are average-pooled into `o_i` and fused with the drug's own
//! latent, `h_i = g d_i + (1 - g) o_i`. The score is
//! `sigmoid(W2ᵀ (h_i ⊙ s_j) + b3)`.
//!
//! Behavior vectors are binary, so `W1ᵀ r` is the sum of the rows of `W1`
//! selected by the row's support; the encoders never materialize dense
//! inputs.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::AssociationMatrix;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation and the activated value.
    pub fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => post * (1.0 - post),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::Config(format!("unknown activation `{s}` (relu|sigmoid)"))),
        }
    }
}

/// What the first-layer encoders see: the association row/column, or a
/// one-hot indicator of the drug/disease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMode {
    #[default]
    Behavior,
    OneHot,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Behavior => "behavior",
            InputMode::OneHot => "one_hot",
        })
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "behavior" => Ok(InputMode::Behavior),
            "one_hot" | "onehot" => Ok(InputMode::OneHot),
            _ => Err(Error::Config(format!("unknown input mode `{s}` (behavior|one_hot)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub latent_dim: usize,
    /// Maximum number of neighbor drugs pooled per pair.
    pub neighbor_cap: usize,
    /// Weight of the drug's own latent in the fused representation.
    pub fusion_weight: f64,
    pub activation: Activation,
    pub input_mode: InputMode,
    /// Drop the target entry from both behavior vectors when scoring a
    /// training positive.
    pub mask_target: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            neighbor_cap: 10,
            fusion_weight: 0.5,
            activation: Activation::Relu,
            input_mode: InputMode::Behavior,
            mask_target: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fusion_weight) {
            return Err(Error::Config(format!("fusion_weight {} outside [0, 1]", self.fusion_weight)));
        }
        Ok(())
    }

    /// First-layer input widths `(drug encoder, disease encoder)`.
    pub fn input_dims(&self, num_drugs: usize, num_diseases: usize) -> (usize, usize) {
        match self.input_mode {
            InputMode::Behavior => (num_diseases, num_drugs),
            InputMode::OneHot => (num_drugs, num_diseases),
        }
    }
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Drug encoder weights, one row per input feature.
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    /// Disease encoder weights, one row per input feature.
    pub v1: DenseMatrix,
    pub b2: Vec<f64>,
    pub w2: Vec<f64>,
    pub b3: f64,
}

impl ModelParams {
    pub fn zeros(drug_inputs: usize, disease_inputs: usize, latent_dim: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(drug_inputs, latent_dim),
            b1: vec![0.0; latent_dim],
            v1: DenseMatrix::zeros(disease_inputs, latent_dim),
            b2: vec![0.0; latent_dim],
            w2: vec![0.0; latent_dim],
            b3: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w1.rows(), self.v1.rows(), self.latent_dim())
    }

    pub fn latent_dim(&self) -> usize {
        self.b1.len()
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.v1.as_slice(),
            &self.b2,
            &self.w2,
            std::slice::from_ref(&self.b3),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.v1.as_mut_slice(),
            &mut self.b2,
            &mut self.w2,
            std::slice::from_mut(&mut self.b3),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks the tensor shapes against a matrix and hyperparameters.
    pub fn check_shapes(&self, hp: &Hyperparams, num_drugs: usize, num_diseases: usize) -> Result<()> {
        let h = hp.latent_dim;
        let (din, sin) = hp.input_dims(num_drugs, num_diseases);
        let ok = self.w1.shape() == (din, h)
            && self.v1.shape() == (sin, h)
            && self.b1.len() == h
            && self.b2.len() == h
            && self.w2.len() == h;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "parameters W1 {:?}, V1 {:?}, h={} do not fit {num_drugs}x{num_diseases} with h={h} ({} input)",
                self.w1.shape(),
                self.v1.shape(),
                self.latent_dim(),
                hp.input_mode
            )))
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(hp: &Hyperparams, num_drugs: usize, num_diseases: usize, seed: u64) -> Result<ModelParams> {
    hp.validate()?;
    if num_drugs == 0 || num_diseases == 0 {
        return Err(Error::Config("cannot initialize a model for an empty matrix".into()));
    }
    let h = hp.latent_dim;
    let (din, sin) = hp.input_dims(num_drugs, num_diseases);
    let mut params = ModelParams::zeros(din, sin, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot_fill(params.w1.as_mut_slice(), din, h, &mut rng);
    glorot_fill(params.v1.as_mut_slice(), sin, h, &mut rng);
    glorot_fill(&mut params.w2, h, 1, &mut rng);
    Ok(params)
}

pub(crate) fn glorot_fill(out: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
    for v in out {
        *v = dist.sample(rng);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pre-activation and activation of one encoder applied to a binary input.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// Indices of the nonzero input features.
    pub input: Vec<usize>,
    pub pre: Vec<f64>,
    pub latent: Vec<f64>,
}

fn encode(weights: &DenseMatrix, bias: &[f64], input: Vec<usize>, act: Activation) -> Encoded {
    let mut pre = bias.to_vec();
    for &u in &input {
        for (p, w) in pre.iter_mut().zip(weights.row(u)) {
            *p += w;
        }
    }
    let latent = pre.iter().map(|&x| act.apply(x)).collect();
    Encoded { input, pre, latent }
}

fn drug_input(mat: &AssociationMatrix, hp: &Hyperparams, drug: usize, masked: Option<usize>) -> Vec<usize> {
    match hp.input_mode {
        InputMode::OneHot => vec![drug],
        InputMode::Behavior => mat.drug_row(drug).iter().copied().filter(|&j| Some(j) != masked).collect(),
    }
}

fn disease_input(mat: &AssociationMatrix, hp: &Hyperparams, disease: usize, masked: Option<usize>) -> Vec<usize> {
    match hp.input_mode {
        InputMode::OneHot => vec![disease],
        InputMode::Behavior => mat.disease_col(disease).iter().copied().filter(|&i| Some(i) != masked).collect(),
    }
}

fn encode_drug(params: &ModelParams, hp: &Hyperparams, mat: &AssociationMatrix, drug: usize, masked: Option<usize>) -> Encoded {
    encode(&params.w1, &params.b1, drug_input(mat, hp, drug, masked), hp.activation)
}

fn encode_disease(params: &ModelParams, hp: &Hyperparams, mat: &AssociationMatrix, disease: usize, masked: Option<usize>) -> Encoded {
    encode(&params.v1, &params.b2, disease_input(mat, hp, disease, masked), hp.activation)
}

/// `d_i = f(W1ᵀ r_i + b1)`.
pub fn drug_latent(params: &ModelParams, hp: &Hyperparams, mat: &AssociationMatrix, drug: usize) -> Result<Vec<f64>> {
    mat.check_drug(drug)?;
    params.check_shapes(hp, mat.num_drugs(), mat.num_diseases())?;
    Ok(encode_drug(params, hp, mat, drug, None).latent)
}

/// `s_j = f(V1ᵀ c_j + b2)`.
pub fn disease_latent(params: &ModelParams, hp: &Hyperparams, mat: &AssociationMatrix, disease: usize) -> Result<Vec<f64>> {
    mat.check_disease(disease)?;
    params.check_shapes(hp, mat.num_drugs(), mat.num_diseases())?;
    Ok(encode_disease(params, hp, mat, disease, None).latent)
}

/// Drugs other than `drug` associated with `disease`, lowest indices first,
/// at most `cap` of them.
pub fn neighbor_set(mat: &AssociationMatrix, drug: usize, disease: usize, cap: usize) -> Vec<usize> {
    mat.disease_col(disease)
        .iter()
        .copied()
        .filter(|&t| t != drug)
        .take(cap)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLatent {
    pub drug: usize,
    pub encoded: Encoded,
}

/// Every intermediate of one forward pass, as needed by backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub drug: usize,
    pub disease: usize,
    pub drug_enc: Encoded,
    pub disease_enc: Encoded,
    pub neighbors: Vec<NeighborLatent>,
    /// Mean of the neighbor latents; zeros when there are none.
    pub pooled: Vec<f64>,
    /// Fused drug representation.
    pub fused: Vec<f64>,
    pub logit: f64,
    pub score: f64,
}

impl ForwardTrace {
    pub fn drug_latent(&self) -> &[f64] {
        &self.drug_enc.latent
    }

    pub fn disease_latent(&self) -> &[f64] {
        &self.disease_enc.latent
    }
}

struct Head {
    pooled: Vec<f64>,
    fused: Vec<f64>,
    logit: f64,
    score: f64,
}

fn head<'a>(
    params: &ModelParams,
    hp: &Hyperparams,
    drug: &[f64],
    disease: &[f64],
    neighbors: impl ExactSizeIterator<Item = &'a [f64]>,
) -> Head {
    let h = drug.len();
    let count = neighbors.len();
    let mut pooled = vec![0.0; h];
    for lat in neighbors {
        for (p, v) in pooled.iter_mut().zip(lat) {
            *p += v;
        }
    }
    let fused = if count == 0 {
        drug.to_vec()
    } else {
        let g = hp.fusion_weight;
        for p in pooled.iter_mut() {
            *p /= count as f64;
        }
        drug.iter().zip(&pooled).map(|(d, o)| g * d + (1.0 - g) * o).collect()
    };
    let mut logit = params.b3;
    for k in 0..h {
        logit += params.w2[k] * (fused[k] * disease[k]);
    }
    Head { pooled, fused, logit, score: sigmoid(logit) }
}

fn masked_entries(hp: &Hyperparams, mat: &AssociationMatrix, drug: usize, disease: usize) -> (Option<usize>, Option<usize>) {
    if hp.mask_target && mat.contains(drug, disease) {
        (Some(disease), Some(drug))
    } else {
        (None, None)
    }
}

pub fn forward(
    params: &ModelParams,
    hp: &Hyperparams,
    mat: &AssociationMatrix,
    drug: usize,
    disease: usize,
) -> Result<ForwardTrace> {
    mat.check_drug(drug)?;
    mat.check_disease(disease)?;
    params.check_shapes(hp, mat.num_drugs(), mat.num_diseases())?;
    Ok(forward_unchecked(params, hp, mat, drug, disease))
}

pub(crate) fn forward_unchecked(
    params: &ModelParams,
    hp: &Hyperparams,
    mat: &AssociationMatrix,
    drug: usize,
    disease: usize,
) -> ForwardTrace {
    let (mask_row, mask_col) = masked_entries(hp, mat, drug, disease);
    let drug_enc = encode_drug(params, hp, mat, drug, mask_row);
    let disease_enc = encode_disease(params, hp, mat, disease, mask_col);
    let neighbors: Vec<NeighborLatent> = neighbor_set(mat, drug, disease, hp.neighbor_cap)
        .into_iter()
        .map(|t| NeighborLatent { drug: t, encoded: encode_drug(params, hp, mat, t, None) })
        .collect();
    let out = head(
        params,
        hp,
        &drug_enc.latent,
        &disease_enc.latent,
        neighbors.iter().map(|n| n.encoded.latent.as_slice()),
    );
    ForwardTrace {
        drug,
        disease,
        drug_enc,
        disease_enc,
        neighbors,
        pooled: out.pooled,
        fused: out.fused,
        logit: out.logit,
        score: out.score,
    }
}

/// Scores every drug–disease pair. Latents are computed once per drug and
/// per disease; the result equals per-pair [`forward`] bit for bit.
pub fn score_all(params: &ModelParams, hp: &Hyperparams, mat: &AssociationMatrix) -> Result<DenseMatrix> {
    params.check_shapes(hp, mat.num_drugs(), mat.num_diseases())?;
    let (m, n) = (mat.num_drugs(), mat.num_diseases());
    let drugs: Vec<Vec<f64>> = (0..m).map(|i| encode_drug(params, hp, mat, i, None).latent).collect();
    let diseases: Vec<Vec<f64>> = (0..n).map(|j| encode_disease(params, hp, mat, j, None).latent).collect();
    let mut out = DenseMatrix::zeros(m, n);
    out.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = if hp.mask_target && mat.contains(i, j) {
                    forward_unchecked(params, hp, mat, i, j).score
                } else {
                    let nb = neighbor_set(mat, i, j, hp.neighbor_cap);
                    head(params, hp, &drugs[i], &diseases[j], nb.iter().map(|&t| drugs[t].as_slice())).score
                };
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(m: usize, n: usize, pairs: &[(usize, usize)]) -> AssociationMatrix {
        AssociationMatrix::from_parts(
            (0..m).map(|i| format!("d{i}")).collect(),
            (0..n).map(|j| format!("s{j}")).collect(),
            pairs.iter().copied(),
        )
        .unwrap()
    }

    fn random_mat(m: usize, n: usize, seed: u64) -> AssociationMatrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<_> = (0..m * n / 4).map(|_| (rng.random_range(0..m), rng.random_range(0..n))).collect();
        mat(m, n, &pairs)
    }

    #[test]
    fn init_shapes_and_zero_biases() {
        let hp = Hyperparams { latent_dim: 8, ..Default::default() };
        let p = init_params(&hp, 20, 15, 1).unwrap();
        assert_eq!(p.w1.shape(), (15, 8));
        assert_eq!(p.v1.shape(), (20, 8));
        assert_eq!(p.w2.len(), 8);
        assert!(p.b1.iter().chain(&p.b2).all(|&b| b == 0.0) && p.b3 == 0.0);
        assert_eq!(p, init_params(&hp, 20, 15, 1).unwrap());
        assert_ne!(p, init_params(&hp, 20, 15, 2).unwrap());
        let limit = (6.0f64 / 23.0).sqrt();
        assert!(p.w1.as_slice().iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn one_hot_init_swaps_input_dims() {
        let hp = Hyperparams { latent_dim: 4, input_mode: InputMode::OneHot, ..Default::default() };
        let p = init_params(&hp, 20, 15, 1).unwrap();
        assert_eq!(p.w1.shape(), (20, 4));
        assert_eq!(p.v1.shape(), (15, 4));
    }

    #[test]
    fn empty_row_gives_zero_latent() {
        let m = mat(3, 3, &[(0, 0), (1, 1)]);
        let hp = Hyperparams { latent_dim: 4, ..Default::default() };
        let p = init_params(&hp, 3, 3, 7).unwrap();
        assert_eq!(drug_latent(&p, &hp, &m, 2).unwrap(), vec![0.0; 4]);
        assert_eq!(disease_latent(&p, &hp, &m, 2).unwrap(), vec![0.0; 4]);
        assert!(drug_latent(&p, &hp, &m, 3).is_err());
    }

    #[test]
    fn basis_vector_selects_weight_row() {
        let m = mat(2, 2, &[(0, 0)]);
        let hp = Hyperparams { latent_dim: 2, ..Default::default() };
        let mut p = ModelParams::zeros(2, 2, 2);
        p.w1 = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(drug_latent(&p, &hp, &m, 0).unwrap(), vec![1.0, 0.0]);
        p.v1 = DenseMatrix::from_vec(2, 2, vec![0.5, -2.0, 3.0, 3.0]);
        assert_eq!(disease_latent(&p, &hp, &m, 0).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn one_hot_ignores_associations() {
        let a = mat(3, 4, &[(0, 0), (1, 2)]);
        let b = mat(3, 4, &[(0, 3), (2, 1), (1, 1)]);
        let hp = Hyperparams { latent_dim: 5, input_mode: InputMode::OneHot, ..Default::default() };
        let mut p = init_params(&hp, 3, 4, 3).unwrap();
        p.b1 = vec![0.1, -0.2, 0.3, -0.4, 0.5];
        for i in 0..3 {
            let expect: Vec<f64> = p.w1.row(i).iter().zip(&p.b1).map(|(w, b)| (w + b).max(0.0)).collect();
            assert_eq!(drug_latent(&p, &hp, &a, i).unwrap(), expect);
            assert_eq!(drug_latent(&p, &hp, &b, i).unwrap(), expect);
        }
    }

    #[test]
    fn neighbor_rules() {
        let m = mat(10, 3, &[(4, 0), (1, 1), (4, 1), (7, 1), (9, 1)]);
        assert!(neighbor_set(&m, 4, 0, 10).is_empty());
        assert_eq!(neighbor_set(&m, 4, 1, 2), vec![1, 7]);
        assert!(neighbor_set(&m, 4, 1, 0).is_empty());
        assert_eq!(neighbor_set(&m, 0, 1, 10), vec![1, 4, 7, 9]);
    }

    #[test]
    fn fusion_weight_one_uses_own_latent() {
        let m = random_mat(10, 8, 1);
        let hp = Hyperparams { latent_dim: 6, fusion_weight: 1.0, ..Default::default() };
        let p = init_params(&hp, 10, 8, 2).unwrap();
        for (i, j) in [(0, 0), (3, 5), (9, 7)] {
            let t = forward(&p, &hp, &m, i, j).unwrap();
            assert_eq!(t.fused, t.drug_enc.latent);
        }
    }

    #[test]
    fn single_neighbor_is_pooled_verbatim() {
        let m = mat(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)]);
        let hp = Hyperparams { latent_dim: 4, fusion_weight: 0.3, ..Default::default() };
        let p = init_params(&hp, 3, 2, 11).unwrap();
        let t = forward(&p, &hp, &m, 0, 0).unwrap();
        assert_eq!(t.neighbors.len(), 1);
        assert_eq!(t.pooled, drug_latent(&p, &hp, &m, 1).unwrap());
        for k in 0..4 {
            let expect = 0.3 * t.drug_enc.latent[k] + 0.7 * t.pooled[k];
            assert_eq!(t.fused[k], expect);
        }
    }

    #[test]
    fn zero_head_scores_half() {
        let m = random_mat(6, 5, 3);
        let hp = Hyperparams { latent_dim: 3, ..Default::default() };
        let mut p = init_params(&hp, 6, 5, 3).unwrap();
        p.w2 = vec![0.0; 3];
        let s = score_all(&p, &hp, &m).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn batch_matches_individual() {
        for mask_target in [false, true] {
            let m = random_mat(10, 8, 5);
            let hp = Hyperparams { latent_dim: 7, neighbor_cap: 2, mask_target, ..Default::default() };
            let mut p = init_params(&hp, 10, 8, 9).unwrap();
            p.b1.iter_mut().for_each(|b| *b = 0.05);
            let all = score_all(&p, &hp, &m).unwrap();
            for i in 0..10 {
                for j in 0..8 {
                    let s = forward(&p, &hp, &m, i, j).unwrap().score;
                    assert!((all.get(i, j) - s).abs() <= 1e-12);
                    assert!(s > 0.0 && s < 1.0);
                }
            }
            assert_eq!(all, score_all(&p, &hp, &m).unwrap());
        }
    }

    #[test]
    fn mask_drops_target_entry() {
        let m = mat(3, 3, &[(0, 0), (0, 1), (1, 0)]);
        let hp = Hyperparams { latent_dim: 2, mask_target: true, ..Default::default() };
        let p = init_params(&hp, 3, 3, 1).unwrap();
        let t = forward(&p, &hp, &m, 0, 0).unwrap();
        assert_eq!(t.drug_enc.input, vec![1]);
        assert_eq!(t.disease_enc.input, vec![1]);
        // non-positive pairs are unaffected
        let t = forward(&p, &hp, &m, 1, 1).unwrap();
        assert_eq!(t.drug_enc.input, vec![0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = mat(3, 3, &[(0, 0)]);
        let hp = Hyperparams { latent_dim: 2, ..Default::default() };
        let p = init_params(&hp, 4, 3, 1).unwrap();
        assert!(matches!(forward(&p, &hp, &m, 0, 0), Err(Error::ShapeMismatch(_))));
    }
}
