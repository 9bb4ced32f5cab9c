//! The objective-variable EM engine.
//!
//! Each auction's latent reserve price `y` gets a Gaussian prior
//! `N(f(x; w), sigma^2)` and a satisfaction likelihood
//! `exp(-(B - R(y, B, b)))`. Conditioning satisfaction to 1 everywhere, the
//! E-step posterior factorizes into three regions (`y < b`, `b <= y <= B`,
//! `y > B`); on the middle region the `e^y` tilt shifts a Gaussian by
//! `sigma^2`, so the normalizer and posterior mean have closed forms built
//! from normal CDFs. All terms are assembled with signed log-sum-exp: the
//! factors `e^b` and `e^(mu + sigma^2/2)` overflow linear arithmetic at
//! realistic prices.
//!
//! The quadrature oracle in [`crate::numerics`] is the arbiter for these
//! closed forms; their agreement is enforced by tests.

use rayon::prelude::*;
use thiserror::Error;

use crate::auction::{total_revenue, AuctionError, Dataset};
use crate::numerics::{
    log_std_normal_cdf, log_std_normal_cdf_diff, log_std_normal_pdf, log_sum_exp, SignedLog,
};
use crate::predictors::PredictorError;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("invalid bids: need 0 <= b <= B, got B={highest_bid}, b={second_bid}")]
    InvalidBids { highest_bid: f64, second_bid: f64 },
    #[error("length mismatch: {means} predictor means vs {records} records")]
    LengthMismatch { means: usize, records: usize },
    #[error("record {index}: {source}")]
    Record {
        index: usize,
        source: Box<EmError>,
    },
    #[error("dataset must be non-empty")]
    EmptyDataset,
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error("M-step failed: {0}")]
    MStep(#[from] PredictorError),
    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize, trace: EmTrace },
}

/// EM hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Smoothing standard deviation of the reserve-price prior.
    pub sigma: f64,
    /// L2 regularization strength.
    pub lambda: f64,
    /// Convergence threshold on the change in validation revenue.
    pub tol: f64,
    /// Iteration cap.
    pub max_iters: usize,
}

impl EmConfig {
    pub fn new(sigma: f64, lambda: f64) -> Self {
        Self {
            sigma,
            lambda,
            tol: 1e-5,
            max_iters: 200,
        }
    }

    pub fn validate(&self) -> Result<(), EmError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(EmError::InvalidSigma(self.sigma));
        }
        if !(self.lambda >= 0.0 && self.tol > 0.0) {
            return Err(EmError::InvalidSigma(self.sigma));
        }
        Ok(())
    }
}

/// Per-auction E-step output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorStats {
    /// Log of the normalizer scaled by `e^B` (the three-term CDF sum).
    pub log_norm: f64,
    /// Posterior expectation of the latent reserve price.
    pub mean: f64,
}

fn check_inputs(mu: f64, sigma: f64, highest_bid: f64, second_bid: f64) -> Result<(), EmError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(EmError::InvalidSigma(sigma));
    }
    if !(second_bid >= 0.0 && second_bid <= highest_bid && highest_bid.is_finite() && mu.is_finite())
    {
        return Err(EmError::InvalidBids {
            highest_bid,
            second_bid,
        });
    }
    Ok(())
}

/// Closed-form posterior normalizer and mean for one auction.
///
/// With `beta = (b-mu)/sigma`, `bhat = (B-mu)/sigma` and tilted arguments
/// `kappa = (. - sigma)`, the `e^B`-scaled normalizer is
///
/// ```text
/// sigma [ e^b Phi(beta)
///       + e^(mu + sigma^2/2) (Phi(bhat - sigma) - Phi(beta - sigma))
///       + (1 - Phi(bhat)) ]
/// ```
///
/// and the scaled first moment adds the region-wise `mu Phi +- sigma phi`
/// patterns, with the middle region's mean shifted to `mu + sigma^2`. Every
/// term is carried as (sign, log magnitude).
pub fn posterior_stats(
    mu: f64,
    sigma: f64,
    highest_bid: f64,
    second_bid: f64,
) -> Result<PosteriorStats, EmError> {
    check_inputs(mu, sigma, highest_bid, second_bid)?;

    let ln_sigma = sigma.ln();
    let beta = (second_bid - mu) / sigma;
    let bhat = (highest_bid - mu) / sigma;
    let kappa_beta = beta - sigma;
    let kappa_bhat = bhat - sigma;
    let tilt = mu + 0.5 * sigma * sigma;

    // Normalizer terms (all non-negative).
    let d1 = ln_sigma + second_bid + log_std_normal_cdf(beta);
    let d2 = if highest_bid > second_bid {
        ln_sigma + tilt + log_std_normal_cdf_diff(kappa_bhat, kappa_beta)
    } else {
        f64::NEG_INFINITY
    };
    let d3 = ln_sigma + log_std_normal_cdf(-bhat);
    let log_norm = log_sum_exp(&[SignedLog::pos(d1), SignedLog::pos(d2), SignedLog::pos(d3)]);
    debug_assert!(!log_norm.is_zero());

    let signed_ln = |v: f64| {
        if v == 0.0 {
            (1.0, f64::NEG_INFINITY)
        } else {
            (v.signum(), v.abs().ln())
        }
    };
    let (mu_sign, ln_mu) = signed_ln(mu);
    let (shifted_sign, ln_shifted) = signed_ln(mu + sigma * sigma);

    let mut terms = vec![
        // Region below b: sigma e^b (mu Phi(beta) - sigma phi(beta)).
        SignedLog::with_sign(mu_sign, d1 + ln_mu),
        SignedLog::neg(2.0 * ln_sigma + second_bid + log_std_normal_pdf(beta)),
        // Region above B: sigma (mu Phi(-bhat) + sigma phi(bhat)).
        SignedLog::with_sign(mu_sign, d3 + ln_mu),
        SignedLog::pos(2.0 * ln_sigma + log_std_normal_pdf(bhat)),
    ];
    if highest_bid > second_bid {
        // Middle region: sigma e^tilt [ (mu + sigma^2)(Phi(k_B) - Phi(k_b))
        //                              - sigma (phi(k_B) - phi(k_b)) ].
        terms.push(SignedLog::with_sign(shifted_sign, d2 + ln_shifted));
        terms.push(SignedLog::neg(
            2.0 * ln_sigma + tilt + log_std_normal_pdf(kappa_bhat),
        ));
        terms.push(SignedLog::pos(
            2.0 * ln_sigma + tilt + log_std_normal_pdf(kappa_beta),
        ));
    }
    let first_moment = log_sum_exp(&terms);
    let mean = first_moment.sign * (first_moment.ln_abs - log_norm.ln_abs).exp();

    Ok(PosteriorStats {
        log_norm: log_norm.ln_abs,
        mean,
    })
}

/// Log of the `e^B`-scaled posterior normalizer.
pub fn log_normalizer(
    mu: f64,
    sigma: f64,
    highest_bid: f64,
    second_bid: f64,
) -> Result<f64, EmError> {
    Ok(posterior_stats(mu, sigma, highest_bid, second_bid)?.log_norm)
}

/// Posterior expectation of the latent reserve price.
pub fn posterior_mean(
    mu: f64,
    sigma: f64,
    highest_bid: f64,
    second_bid: f64,
) -> Result<f64, EmError> {
    Ok(posterior_stats(mu, sigma, highest_bid, second_bid)?.mean)
}

/// Smoothed-revenue diagnostic: `sum_i (log_norm_i - B_i) - lambda/2 * reg`.
///
/// Non-decreasing across EM iterations for exact M-steps.
pub fn smoothed_revenue(
    means: &[f64],
    data: &Dataset,
    config: &EmConfig,
    reg_norm: f64,
) -> Result<f64, EmError> {
    config.validate()?;
    if means.len() != data.len() {
        return Err(EmError::LengthMismatch {
            means: means.len(),
            records: data.len(),
        });
    }
    let mut total = 0.0;
    for (i, (mu, rec)) in means.iter().zip(data.iter()).enumerate() {
        let stats = posterior_stats(*mu, config.sigma, rec.highest_bid(), rec.second_bid())
            .map_err(|e| EmError::Record {
                index: i,
                source: Box::new(e),
            })?;
        total += stats.log_norm - rec.highest_bid();
    }
    Ok(total - 0.5 * config.lambda * reg_norm)
}

/// Element-wise posterior means over all records (the E-step).
///
/// Records are conditionally independent, so the map runs in parallel;
/// output order follows input order and each element's arithmetic is
/// identical to a sequential run.
pub fn e_step(means: &[f64], data: &Dataset, sigma: f64) -> Result<Vec<f64>, EmError> {
    if means.len() != data.len() {
        return Err(EmError::LengthMismatch {
            means: means.len(),
            records: data.len(),
        });
    }
    means
        .par_iter()
        .zip(data.records().par_iter())
        .enumerate()
        .map(|(i, (mu, rec))| {
            posterior_mean(*mu, sigma, rec.highest_bid(), rec.second_bid()).map_err(|e| {
                EmError::Record {
                    index: i,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

/// One EM iteration's diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmIteration {
    pub index: usize,
    /// Smoothed-revenue objective on the training set.
    pub objective: f64,
    /// Total revenue of the current predictor's reserves on the validation set.
    pub valid_revenue: f64,
}

/// Iteration-indexed trace of an EM run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmTrace {
    pub iterations: Vec<EmIteration>,
}

impl EmTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.objective).collect()
    }

    pub fn last_valid_revenue(&self) -> Option<f64> {
        self.iterations.last().map(|it| it.valid_revenue)
    }
}

/// Predictor-specific fitting interface used by [`em_fit`].
///
/// A solver is constructed around a fixed training/validation pair and its
/// hyperparameters; exact solvers cache their factorizations, the neural
/// solver keeps its warm-start state.
pub trait EmSolver {
    type Model: Clone;

    /// Fits the predictor against E-step targets (complete-data M-step).
    fn m_step(&mut self, targets: &[f64]) -> Result<Self::Model, EmError>;

    /// Predictor means on the training set.
    fn train_means(&self, model: &Self::Model) -> Vec<f64>;

    /// Predictor means on the validation set.
    fn valid_means(&self, model: &Self::Model) -> Vec<f64>;

    /// Squared parameter norm entering the `lambda/2` penalty.
    fn weight_norm_sq(&self, model: &Self::Model) -> f64;
}

/// Fits a predictor by objective-variable EM.
///
/// Initialization treats the highest bids as the expected reserve prices and
/// runs an M-step. Afterwards the loop alternates E-steps (posterior means
/// under the current predictor) and M-steps, stopping when the validation
/// revenue changes by less than `tol * max(1, |revenue|)` or `max_iters` is
/// reached. Returns the snapshot with the best validation revenue seen.
pub fn em_fit<S: EmSolver>(
    solver: &mut S,
    train: &Dataset,
    valid: &Dataset,
    config: &EmConfig,
) -> Result<(S::Model, EmTrace), EmError> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(EmError::EmptyDataset);
    }

    let mut trace = EmTrace::default();
    let record = |trace: &mut EmTrace,
                  solver: &S,
                  model: &S::Model,
                  index: usize|
     -> Result<f64, EmError> {
        let objective = smoothed_revenue(
            &solver.train_means(model),
            train,
            config,
            solver.weight_norm_sq(model),
        )?;
        let valid_revenue = total_revenue(&solver.valid_means(model), valid)?;
        trace.iterations.push(EmIteration {
            index,
            objective,
            valid_revenue,
        });
        if !objective.is_finite() || !valid_revenue.is_finite() {
            return Err(EmError::NonFiniteObjective {
                iteration: index,
                trace: trace.clone(),
            });
        }
        Ok(valid_revenue)
    };

    let mut model = solver.m_step(&train.highest_bids())?;
    let mut prev_revenue = record(&mut trace, solver, &model, 0)?;
    let mut best = (model.clone(), prev_revenue);

    for iter in 1..=config.max_iters {
        let means = solver.train_means(&model);
        let targets = e_step(&means, train, config.sigma)?;
        model = solver.m_step(&targets)?;
        let valid_revenue = record(&mut trace, solver, &model, iter)?;
        if valid_revenue > best.1 {
            best = (model.clone(), valid_revenue);
        }
        if (valid_revenue - prev_revenue).abs() < config.tol * valid_revenue.abs().max(1.0) {
            break;
        }
        prev_revenue = valid_revenue;
    }

    Ok((best.0, trace))
}
