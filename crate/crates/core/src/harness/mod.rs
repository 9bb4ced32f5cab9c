//! Experiment driver: dataset and predictor files, feature standardization,
//! grid search, and replicated Table-style experiments.

mod data_io;
mod experiment;
mod model_io;

pub use data_io::{load_dataset, save_dataset, Standardizer};
pub use experiment::{
    grid_search, run_experiment, ChosenParams, DataSource, EmSettings, ExperimentConfig,
    ExperimentReport, FittedModel, Grids, Method, ReplicationResult, SplitSizes,
};
pub use model_io::{load_predictor, save_predictor, SavedPredictor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invariant violation at {path}:{line}: {message}")]
    InvariantViolation {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dimension inconsistency at {path}:{line}: expected {expected} features, got {got}")]
    DimensionInconsistency {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("malformed predictor file {path}: {message}")]
    MalformedFile { path: String, message: String },
    #[error("predictor kind mismatch: file holds {found}, expected {expected}")]
    KindMismatch { found: String, expected: String },
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("every grid point failed; last error: {0}")]
    AllPointsFailed(String),
    #[error(transparent)]
    Auction(#[from] crate::auction::AuctionError),
    #[error(transparent)]
    Em(#[from] crate::em::EmError),
    #[error(transparent)]
    Predictor(#[from] crate::predictors::PredictorError),
    #[error(transparent)]
    Sim(#[from] crate::simdata::SimError),
}
