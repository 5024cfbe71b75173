//! Plain matrix factorization baseline: free drug and disease embeddings
//! scored by `sigmoid(p_iᵀ q_j)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::{glorot_fill, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct MfParams {
    pub drug_factors: DenseMatrix,
    pub disease_factors: DenseMatrix,
}

impl MfParams {
    pub fn init(num_drugs: usize, num_diseases: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        if num_drugs == 0 || num_diseases == 0 || latent_dim == 0 {
            return Err(Error::Config("matrix factorization needs nonzero dimensions".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = DenseMatrix::zeros(num_drugs, latent_dim);
        let mut q = DenseMatrix::zeros(num_diseases, latent_dim);
        glorot_fill(p.as_mut_slice(), num_drugs, latent_dim, &mut rng);
        glorot_fill(q.as_mut_slice(), num_diseases, latent_dim, &mut rng);
        Ok(Self { drug_factors: p, disease_factors: q })
    }

    pub fn zeros_like(&self) -> Self {
        let (m, h) = self.drug_factors.shape();
        Self {
            drug_factors: DenseMatrix::zeros(m, h),
            disease_factors: DenseMatrix::zeros(self.disease_factors.rows(), h),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.drug_factors.cols()
    }

    pub fn logit(&self, drug: usize, disease: usize) -> f64 {
        self.drug_factors
            .row(drug)
            .iter()
            .zip(self.disease_factors.row(disease))
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn score(&self, drug: usize, disease: usize) -> f64 {
        sigmoid(self.logit(drug, disease))
    }

    /// Adds `dloss/dscore` back-propagated through one pair into `grads`.
    pub fn accumulate(&self, drug: usize, disease: usize, score: f64, dloss_dscore: f64, grads: &mut MfParams) {
        let dz = dloss_dscore * score * (1.0 - score);
        let p = self.drug_factors.row(drug);
        let q = self.disease_factors.row(disease);
        for (g, v) in grads.drug_factors.row_mut(drug).iter_mut().zip(q) {
            *g += dz * v;
        }
        for (g, v) in grads.disease_factors.row_mut(disease).iter_mut().zip(p) {
            *g += dz * v;
        }
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.drug_factors.as_slice(), self.disease_factors.as_slice()]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.drug_factors.as_mut_slice(), self.disease_factors.as_mut_slice()]
    }
}
