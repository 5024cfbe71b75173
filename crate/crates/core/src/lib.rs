//! Balanced matrix factorization for drug–disease link prediction.
//!
//! Drugs and diseases are encoded from their association behavior (rows and
//! columns of the binary matrix), the drug latent is blended with latents of
//! drugs that share the target disease, and a sigmoid head scores the pair.
//! Training uses a class-balanced focal-style loss with a margin filter on
//! easy negatives.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dense;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod mf;
pub mod model;
pub mod predictor;
pub mod synthetic;
pub mod train;

pub use config::{RunConfig, Variant};
pub use data::{make_folds, prune_empty, training_view, AssociationMatrix, FoldPlan, Label, SamplePair};
pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use loss::{LossConfig, LossKind};
pub use metrics::{evaluate, MetricsReport};
pub use model::{forward, score_all, Activation, Hyperparams, InputMode, ModelParams};
pub use predictor::{Architecture, Model, Weights};
pub use train::{train, TrainConfig, TrainReport};
