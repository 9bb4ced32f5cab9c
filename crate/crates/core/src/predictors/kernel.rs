//! Polynomial-kernel regression in the dual.

use nalgebra::{DMatrix, DVector};

use super::{features_matrix, PredictorError, ReservePredictor};
use crate::auction::Dataset;
use crate::em::{EmError, EmSolver};
use crate::numerics::{NumericsError, SpdFactor, SpdMatrix};

/// Polynomial Gram block: entry `(i, j) = (x2_i . x1_j + 1)^degree`,
/// shape `x2.nrows() x x1.nrows()`.
pub fn kernel_gram(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    degree: u32,
) -> Result<DMatrix<f64>, PredictorError> {
    if x1.ncols() != x2.ncols() {
        return Err(PredictorError::DimensionMismatch {
            expected: x1.ncols(),
            got: x2.ncols(),
        });
    }
    let mut gram = x2 * x1.transpose();
    gram.apply(|v| *v = (*v + 1.0).powi(degree as i32));
    Ok(gram)
}

/// Exact dual M-step: solves `(K / sigma^2 + lambda I) alpha = targets / sigma^2`.
///
/// Requires `lambda > 0` in general; a positive-semidefinite `K` alone need
/// not be invertible.
pub fn kernel_mstep(
    gram: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    sigma: f64,
) -> Result<DVector<f64>, PredictorError> {
    factor_gram(gram, lambda, sigma)?.solve(targets)
}

fn factor_gram(gram: &DMatrix<f64>, lambda: f64, sigma: f64) -> Result<DualSolve, PredictorError> {
    if gram.nrows() == 0 {
        return Err(PredictorError::EmptyTrainingSet);
    }
    if !(sigma > 0.0 && lambda >= 0.0) {
        return Err(PredictorError::InvalidConfig("need sigma > 0 and lambda >= 0"));
    }
    let n = gram.nrows();
    let mut a = gram / (sigma * sigma);
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let spd = SpdMatrix::new(a).map_err(map_numerics)?;
    let factor = spd.factor().map_err(map_numerics)?;
    Ok(DualSolve { factor, sigma })
}

fn map_numerics(e: NumericsError) -> PredictorError {
    match e {
        NumericsError::NotPositiveDefinite => PredictorError::NotPositiveDefinite,
        NumericsError::NotSymmetric { .. } => {
            PredictorError::InvalidConfig("Gram matrix must be symmetric")
        }
        _ => PredictorError::InvalidConfig("malformed Gram system"),
    }
}

struct DualSolve {
    factor: SpdFactor,
    sigma: f64,
}

impl DualSolve {
    fn solve(&self, targets: &[f64]) -> Result<DVector<f64>, PredictorError> {
        if targets.len() != self.factor.dim() {
            return Err(PredictorError::TargetMismatch {
                targets: targets.len(),
                rows: self.factor.dim(),
            });
        }
        let rhs = DVector::from_column_slice(targets) / (self.sigma * self.sigma);
        self.factor.solve_vec(&rhs).map_err(map_numerics)
    }
}

/// Dual-coefficient predictor; keeps the training features for test-time
/// kernel evaluation with the same polynomial kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPredictor {
    pub alpha: DVector<f64>,
    pub train_features: DMatrix<f64>,
    pub degree: u32,
}

impl KernelPredictor {
    /// Predictions for a whole feature matrix (one row per record).
    pub fn predict_batch(&self, features: &DMatrix<f64>) -> Result<Vec<f64>, PredictorError> {
        let gram = kernel_gram(&self.train_features, features, self.degree)?;
        Ok((gram * &self.alpha).iter().copied().collect())
    }
}

impl ReservePredictor for KernelPredictor {
    fn predict(&self, features: &[f64]) -> Result<f64, PredictorError> {
        if features.len() != self.train_features.ncols() {
            return Err(PredictorError::DimensionMismatch {
                expected: self.train_features.ncols(),
                got: features.len(),
            });
        }
        let mut total = 0.0;
        for (j, alpha) in self.alpha.iter().enumerate() {
            let dot: f64 = self
                .train_features
                .row(j)
                .iter()
                .zip(features)
                .map(|(a, b)| a * b)
                .sum();
            total += alpha * (dot + 1.0).powi(self.degree as i32);
        }
        Ok(total)
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.train_features.ncols())
    }
}

/// EM solver for the kernel predictor. Gram matrices and the dual
/// factorization are fixed across EM iterations and computed once.
pub struct KernelEmSolver {
    solve: DualSolve,
    gram_train: DMatrix<f64>,
    gram_valid: DMatrix<f64>,
    train_features: DMatrix<f64>,
    degree: u32,
}

impl KernelEmSolver {
    pub fn new(
        train: &Dataset,
        valid: &Dataset,
        degree: u32,
        lambda: f64,
        sigma: f64,
    ) -> Result<Self, PredictorError> {
        let train_features = features_matrix(train);
        let valid_features = features_matrix(valid);
        let gram_train = kernel_gram(&train_features, &train_features, degree)?;
        let gram_valid = kernel_gram(&train_features, &valid_features, degree)?;
        let solve = factor_gram(&gram_train, lambda, sigma)?;
        Ok(Self {
            solve,
            gram_train,
            gram_valid,
            train_features,
            degree,
        })
    }
}

impl EmSolver for KernelEmSolver {
    type Model = KernelPredictor;

    fn m_step(&mut self, targets: &[f64]) -> Result<KernelPredictor, EmError> {
        let alpha = self.solve.solve(targets)?;
        Ok(KernelPredictor {
            alpha,
            train_features: self.train_features.clone(),
            degree: self.degree,
        })
    }

    fn train_means(&self, model: &KernelPredictor) -> Vec<f64> {
        (&self.gram_train * &model.alpha).iter().copied().collect()
    }

    fn valid_means(&self, model: &KernelPredictor) -> Vec<f64> {
        (&self.gram_valid * &model.alpha).iter().copied().collect()
    }

    /// `w' w = alpha' K alpha` in the implicit feature space.
    fn weight_norm_sq(&self, model: &KernelPredictor) -> f64 {
        (&self.gram_train * &model.alpha).dot(&model.alpha)
    }
}
