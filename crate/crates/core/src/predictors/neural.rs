//! One-hidden-layer tanh network trained by mini-batch SGD inside each
//! M-step, warm-started from the previous M-step's parameters.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{features_matrix, PredictorError, ReservePredictor};
use crate::auction::Dataset;
use crate::em::{posterior_stats, EmError, EmSolver};

/// `f(x) = w2 . tanh(W1 x)` with `W1: H x d`, `w2: H`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralPredictor {
    pub w1: DMatrix<f64>,
    pub w2: DVector<f64>,
}

impl NeuralPredictor {
    /// Symmetry-breaking cold start: uniform `+-1/sqrt(d)` first layer,
    /// `+-1/sqrt(H)` second layer, fixed by `seed`.
    pub fn init(hidden: usize, dim: usize, seed: u64) -> Result<Self, PredictorError> {
        if hidden == 0 || dim == 0 {
            return Err(PredictorError::InvalidConfig("hidden units and dim must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s1 = 1.0 / (dim as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        let w1 = DMatrix::from_fn(hidden, dim, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * s1);
        let w2 = DVector::from_fn(hidden, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * s2);
        Ok(Self { w1, w2 })
    }

    pub fn hidden_units(&self) -> usize {
        self.w1.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.w1.norm_squared() + self.w2.norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite()) && self.w2.iter().all(|v| v.is_finite())
    }

    /// Predictions for a whole feature matrix (one row per record).
    pub fn predict_batch(&self, features: &DMatrix<f64>) -> Result<Vec<f64>, PredictorError> {
        if features.ncols() != self.dim() {
            return Err(PredictorError::DimensionMismatch {
                expected: self.dim(),
                got: features.ncols(),
            });
        }
        let mut activations = &self.w1 * features.transpose();
        activations.apply(|v| *v = v.tanh());
        Ok((activations.transpose() * &self.w2).iter().copied().collect())
    }
}

impl ReservePredictor for NeuralPredictor {
    fn predict(&self, features: &[f64]) -> Result<f64, PredictorError> {
        if features.len() != self.dim() {
            return Err(PredictorError::DimensionMismatch {
                expected: self.dim(),
                got: features.len(),
            });
        }
        let x = DVector::from_column_slice(features);
        let mut h = &self.w1 * x;
        h.apply(|v| *v = v.tanh());
        Ok(self.w2.dot(&h))
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.dim())
    }
}

/// SGD settings for one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_mstep: usize,
    /// Epochs without holdout improvement before stopping early.
    pub patience: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.patience == 0 {
            return Err(PredictorError::InvalidConfig(
                "learning rate, batch size, and patience must be positive",
            ));
        }
        Ok(())
    }
}

/// M-step loss: `sum_i (f(x_i) - t_i)^2 / (2 sigma^2) + lambda/2 |w|^2`
/// over both layers.
pub fn neural_mstep_loss(
    predictor: &NeuralPredictor,
    features: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    sigma: f64,
) -> Result<f64, PredictorError> {
    let preds = predictor.predict_batch(features)?;
    if preds.len() != targets.len() {
        return Err(PredictorError::TargetMismatch {
            targets: targets.len(),
            rows: preds.len(),
        });
    }
    let data: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / (2.0 * sigma * sigma);
    Ok(data + 0.5 * lambda * predictor.weight_norm_sq())
}

/// Backpropagated gradient of [`neural_mstep_loss`].
pub fn neural_mstep_grad(
    predictor: &NeuralPredictor,
    features: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    sigma: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), PredictorError> {
    let rows: Vec<usize> = (0..features.nrows()).collect();
    grad_on_rows(predictor, features, targets, lambda, sigma, &rows, 1.0, 1.0)
}

/// Gradient over the selected rows with separate scales on the data and
/// penalty terms. The full gradient uses `(1, 1)`; SGD steps use
/// `(sigma^2/|batch|, sigma^2/n)` — the gradient of the `sigma^2`-scaled
/// per-record mean loss — so the stationary points are unchanged but one
/// learning-rate scale serves every `sigma` and dataset size.
#[allow(clippy::too_many_arguments)]
fn grad_on_rows(
    predictor: &NeuralPredictor,
    features: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    sigma: f64,
    rows: &[usize],
    data_scale: f64,
    reg_scale: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), PredictorError> {
    if targets.len() != features.nrows() {
        return Err(PredictorError::TargetMismatch {
            targets: targets.len(),
            rows: features.nrows(),
        });
    }
    let h = predictor.hidden_units();
    let d = predictor.dim();
    if features.ncols() != d {
        return Err(PredictorError::DimensionMismatch {
            expected: d,
            got: features.ncols(),
        });
    }
    let inv_s2 = data_scale / (sigma * sigma);

    let mut grad_w1 = &predictor.w1 * (lambda * reg_scale);
    let mut grad_w2 = &predictor.w2 * (lambda * reg_scale);
    let mut hidden = DVector::zeros(h);
    for &i in rows {
        let x = features.row(i);
        for u in 0..h {
            let mut pre = 0.0;
            for j in 0..d {
                pre += predictor.w1[(u, j)] * x[j];
            }
            hidden[u] = pre.tanh();
        }
        let pred = predictor.w2.dot(&hidden);
        let resid = (pred - targets[i]) * inv_s2;
        for u in 0..h {
            grad_w2[u] += resid * hidden[u];
            let back = resid * predictor.w2[u] * (1.0 - hidden[u] * hidden[u]);
            for j in 0..d {
                grad_w1[(u, j)] += back * x[j];
            }
        }
    }
    Ok((grad_w1, grad_w2))
}

/// Mini-batch gradient descent on the M-step loss, warm-started from the
/// incoming parameters.
///
/// After each epoch the smoothed revenue `sum(log_norm - B)` of the current
/// predictions is scored on the holdout; the best-scoring parameters are
/// returned and `patience` stale epochs end the step early. (Raw holdout
/// revenue is piecewise constant in the predictions and can sit flat for
/// whole M-steps; the smoothed objective moves as soon as the fit does.)
pub fn neural_mstep(
    predictor: &NeuralPredictor,
    features: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    sigma: f64,
    cfg: &SgdConfig,
    holdout: &Dataset,
) -> Result<NeuralPredictor, PredictorError> {
    cfg.validate()?;
    let holdout_features = features_matrix(holdout);
    neural_mstep_inner(
        predictor,
        features,
        targets,
        lambda,
        sigma,
        cfg,
        holdout,
        &holdout_features,
    )
}

#[allow(clippy::too_many_arguments)]
fn neural_mstep_inner(
    predictor: &NeuralPredictor,
    features: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    sigma: f64,
    cfg: &SgdConfig,
    holdout: &Dataset,
    holdout_features: &DMatrix<f64>,
) -> Result<NeuralPredictor, PredictorError> {
    let n = features.nrows();
    if n == 0 {
        return Err(PredictorError::EmptyTrainingSet);
    }
    if targets.len() != n {
        return Err(PredictorError::TargetMismatch { targets: targets.len(), rows: n });
    }

    let holdout_score = |p: &NeuralPredictor| -> Result<f64, PredictorError> {
        let means = p.predict_batch(holdout_features)?;
        let mut total = 0.0;
        for (mu, rec) in means.iter().zip(holdout.iter()) {
            let stats = posterior_stats(*mu, sigma, rec.highest_bid(), rec.second_bid())
                .map_err(|_| PredictorError::NonFiniteLoss)?;
            total += stats.log_norm - rec.highest_bid();
        }
        Ok(total)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = predictor.clone();
    let mut best = (current.clone(), holdout_score(&current)?);
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..cfg.epochs_per_mstep {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let s2 = sigma * sigma;
            let (g1, g2) = grad_on_rows(
                &current,
                features,
                targets,
                lambda,
                sigma,
                batch,
                s2 / batch.len() as f64,
                s2 / n as f64,
            )?;
            current.w1 -= g1 * cfg.learning_rate;
            current.w2 -= g2 * cfg.learning_rate;
        }
        if !current.is_finite() {
            return Err(PredictorError::NonFiniteLoss);
        }
        let loss = neural_mstep_loss(&current, features, targets, lambda, sigma)?;
        if !loss.is_finite() {
            return Err(PredictorError::NonFiniteLoss);
        }
        let score = holdout_score(&current)?;
        if score > best.1 {
            best = (current.clone(), score);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(best.0)
}

/// EM solver for the neural predictor; keeps the warm-start state across
/// M-steps. The EM validation set doubles as the SGD early-stopping holdout.
pub struct NeuralEmSolver {
    current: NeuralPredictor,
    train_features: DMatrix<f64>,
    valid_features: DMatrix<f64>,
    holdout: Dataset,
    cfg: SgdConfig,
    lambda: f64,
    sigma: f64,
}

impl NeuralEmSolver {
    pub fn new(
        train: &Dataset,
        valid: &Dataset,
        hidden: usize,
        lambda: f64,
        sigma: f64,
        cfg: SgdConfig,
    ) -> Result<Self, PredictorError> {
        cfg.validate()?;
        if !(sigma > 0.0 && lambda >= 0.0) {
            return Err(PredictorError::InvalidConfig("need sigma > 0 and lambda >= 0"));
        }
        Ok(Self {
            current: NeuralPredictor::init(hidden, train.dim(), cfg.seed)?,
            train_features: features_matrix(train),
            valid_features: features_matrix(valid),
            holdout: valid.clone(),
            cfg,
            lambda,
            sigma,
        })
    }
}

impl EmSolver for NeuralEmSolver {
    type Model = NeuralPredictor;

    fn m_step(&mut self, targets: &[f64]) -> Result<NeuralPredictor, EmError> {
        self.current = neural_mstep_inner(
            &self.current,
            &self.train_features,
            targets,
            self.lambda,
            self.sigma,
            &self.cfg,
            &self.holdout,
            &self.valid_features,
        )?;
        Ok(self.current.clone())
    }

    fn train_means(&self, model: &NeuralPredictor) -> Vec<f64> {
        model
            .predict_batch(&self.train_features)
            .expect("solver features match the model dimension")
    }

    fn valid_means(&self, model: &NeuralPredictor) -> Vec<f64> {
        model
            .predict_batch(&self.valid_features)
            .expect("solver features match the model dimension")
    }

    fn weight_norm_sq(&self, model: &NeuralPredictor) -> f64 {
        model.weight_norm_sq()
    }
}
