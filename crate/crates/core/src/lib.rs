//! Reserve-price learning for second-price auctions with reserve.
//!
//! Given historical auctions `(features, highest bid, second bid)`, this crate
//! fits a mechanism `f(x; w)` that maps auction features to a reserve price by
//! maximizing a smoothed revenue objective with an EM algorithm: the E-step
//! computes closed-form posterior expectations of per-auction latent reserve
//! prices, the M-step refits the predictor against those expectations.
//!
//! The crate is organized as:
//!
//! - [`auction`]: auction records, the revenue function, evaluation metrics
//! - [`numerics`]: stable normal-distribution functions, SPD solves, and a
//!   quadrature oracle for the posterior moments
//! - [`em`]: closed-form E-step statistics and the EM driver
//! - [`predictors`]: linear ridge, polynomial-kernel, and neural predictors
//! - [`baselines`]: feature-free reference policies
//! - [`simdata`]: seeded simulated-data generators and splitting
//! - [`harness`]: dataset/predictor files, grid search, replicated experiments

pub mod auction;
pub mod baselines;
pub mod em;
pub mod harness;
pub mod numerics;
pub mod predictors;
pub mod simdata;

pub use auction::{AuctionRecord, Dataset};
