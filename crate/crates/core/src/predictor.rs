//! A trained (or freshly initialized) scorer bound to matrix dimensions:
//! either the behavior-fused model or the plain factorization baseline.

use std::fmt;
use std::str::FromStr;

use crate::data::AssociationMatrix;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::mf::MfParams;
use crate::model::{self, init_params, Hyperparams, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Architecture {
    #[default]
    Bmf,
    Mf,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Bmf => "bmf",
            Architecture::Mf => "mf",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bmf" => Ok(Architecture::Bmf),
            "mf" => Ok(Architecture::Mf),
            _ => Err(Error::Config(format!("unknown architecture `{s}` (bmf|mf)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Bmf(ModelParams),
    Mf(MfParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub hp: Hyperparams,
    pub num_drugs: usize,
    pub num_diseases: usize,
    pub weights: Weights,
}

impl Model {
    pub fn init(arch: Architecture, hp: &Hyperparams, num_drugs: usize, num_diseases: usize, seed: u64) -> Result<Self> {
        let weights = match arch {
            Architecture::Bmf => Weights::Bmf(init_params(hp, num_drugs, num_diseases, seed)?),
            Architecture::Mf => {
                hp.validate()?;
                Weights::Mf(MfParams::init(num_drugs, num_diseases, hp.latent_dim, seed)?)
            }
        };
        Ok(Self { hp: hp.clone(), num_drugs, num_diseases, weights })
    }

    pub fn architecture(&self) -> Architecture {
        match self.weights {
            Weights::Bmf(_) => Architecture::Bmf,
            Weights::Mf(_) => Architecture::Mf,
        }
    }

    pub fn check_matrix(&self, mat: &AssociationMatrix) -> Result<()> {
        if (mat.num_drugs(), mat.num_diseases()) != (self.num_drugs, self.num_diseases) {
            return Err(Error::ShapeMismatch(format!(
                "model is {}x{} but the matrix is {}x{}",
                self.num_drugs,
                self.num_diseases,
                mat.num_drugs(),
                mat.num_diseases()
            )));
        }
        Ok(())
    }

    /// Scores every pair, using `mat` as the behavior source.
    pub fn score_all(&self, mat: &AssociationMatrix) -> Result<DenseMatrix> {
        self.check_matrix(mat)?;
        match &self.weights {
            Weights::Bmf(p) => model::score_all(p, &self.hp, mat),
            Weights::Mf(p) => {
                let (m, n) = (self.num_drugs, self.num_diseases);
                let mut out = DenseMatrix::zeros(m, n);
                for i in 0..m {
                    for j in 0..n {
                        out.set(i, j, p.score(i, j));
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn zeros_like(&self) -> Weights {
        match &self.weights {
            Weights::Bmf(p) => Weights::Bmf(p.zeros_like()),
            Weights::Mf(p) => Weights::Mf(p.zeros_like()),
        }
    }
}

impl Weights {
    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Weights::Bmf(p) => p.tensors().to_vec(),
            Weights::Mf(p) => p.tensors().to_vec(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Weights::Bmf(p) => p.tensors_mut().into_iter().collect(),
            Weights::Mf(p) => p.tensors_mut().into_iter().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
