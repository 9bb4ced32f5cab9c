//! Reserve-price mechanisms `f(x; w)`: linear ridge, polynomial-kernel
//! regression in the dual, and a one-hidden-layer tanh network. Each exposes
//! `predict` plus an M-step that refits the parameters against E-step
//! targets.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::auction::Dataset;

mod kernel;
mod linear;
mod neural;

pub use kernel::{kernel_gram, kernel_mstep, KernelEmSolver, KernelPredictor};
pub use linear::{linear_mstep, LinearEmSolver, LinearPredictor};
pub use neural::{
    neural_mstep, neural_mstep_grad, neural_mstep_loss, NeuralEmSolver, NeuralPredictor, SgdConfig,
};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("feature dimension mismatch: predictor expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {targets} targets vs {rows} feature rows")]
    TargetMismatch { targets: usize, rows: usize },
    #[error("normal equations are singular (lambda = 0 with rank-deficient features)")]
    SingularSystem,
    #[error("Gram system is not positive definite (requires lambda > 0)")]
    NotPositiveDefinite,
    #[error("training loss became non-finite (diverged learning rate?)")]
    NonFiniteLoss,
    #[error("fitting requires a non-empty training set")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Anything that maps a feature vector to a reserve price.
pub trait ReservePredictor {
    fn predict(&self, features: &[f64]) -> Result<f64, PredictorError>;

    /// Expected feature dimension, if the predictor is dimension-specific.
    fn input_dim(&self) -> Option<usize>;
}

/// Row-major feature matrix (one row per record) of a dataset.
pub fn features_matrix(data: &Dataset) -> DMatrix<f64> {
    DMatrix::from_fn(data.len(), data.dim(), |i, j| data.records()[i].features()[j])
}
