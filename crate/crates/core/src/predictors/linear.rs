//! Linear ridge predictor with an unregularized intercept.

use nalgebra::{DMatrix, DVector};

use super::{features_matrix, PredictorError, ReservePredictor};
use crate::auction::Dataset;
use crate::em::{EmError, EmSolver};
use crate::numerics::{NumericsError, SpdFactor, SpdMatrix};

/// `f(x) = w . x + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub weights: DVector<f64>,
    pub intercept: f64,
}

impl LinearPredictor {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Squared norm of the penalized parameters (intercept excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.norm_squared()
    }
}

impl ReservePredictor for LinearPredictor {
    fn predict(&self, features: &[f64]) -> Result<f64, PredictorError> {
        if features.len() != self.weights.len() {
            return Err(PredictorError::DimensionMismatch {
                expected: self.weights.len(),
                got: features.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.intercept)
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.weights.len())
    }
}

/// Appends a constant-1 column (the intercept feature, kept out of the
/// ridge penalty).
fn design_matrix(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = features.shape();
    DMatrix::from_fn(n, d + 1, |i, j| if j < d { features[(i, j)] } else { 1.0 })
}

fn ridge_normal_matrix(design: &DMatrix<f64>, lambda: f64, sigma: f64) -> DMatrix<f64> {
    let p = design.ncols();
    let mut a = design.transpose() * design / (sigma * sigma);
    for j in 0..p - 1 {
        a[(j, j)] += lambda;
    }
    a
}

fn factor_ridge(
    design: &DMatrix<f64>,
    lambda: f64,
    sigma: f64,
) -> Result<SpdFactor, PredictorError> {
    let a = SpdMatrix::new(ridge_normal_matrix(design, lambda, sigma)).map_err(map_numerics)?;
    a.factor().map_err(map_numerics)
}

fn map_numerics(e: NumericsError) -> PredictorError {
    match e {
        NumericsError::NotPositiveDefinite => PredictorError::SingularSystem,
        _ => PredictorError::InvalidConfig("malformed normal equations"),
    }
}

fn solve_ridge(
    factor: &SpdFactor,
    design: &DMatrix<f64>,
    targets: &[f64],
    sigma: f64,
) -> Result<LinearPredictor, PredictorError> {
    if targets.len() != design.nrows() {
        return Err(PredictorError::TargetMismatch {
            targets: targets.len(),
            rows: design.nrows(),
        });
    }
    let t = DVector::from_column_slice(targets);
    let rhs = design.transpose() * t / (sigma * sigma);
    let sol = factor.solve_vec(&rhs).map_err(map_numerics)?;
    let d = design.ncols() - 1;
    Ok(LinearPredictor {
        weights: sol.rows(0, d).into_owned(),
        intercept: sol[d],
    })
}

/// Exact ridge M-step: solves
/// `(lambda I* + X~' X~ / sigma^2) w = X~' targets / sigma^2`
/// where `X~` carries the appended intercept column and `I*` leaves the
/// intercept unpenalized.
pub fn linear_mstep(
    features: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    sigma: f64,
) -> Result<LinearPredictor, PredictorError> {
    if features.nrows() == 0 {
        return Err(PredictorError::EmptyTrainingSet);
    }
    if !(sigma > 0.0 && lambda >= 0.0) {
        return Err(PredictorError::InvalidConfig("need sigma > 0 and lambda >= 0"));
    }
    let design = design_matrix(features);
    let factor = factor_ridge(&design, lambda, sigma)?;
    solve_ridge(&factor, &design, targets, sigma)
}

/// EM solver for the linear predictor. The normal matrix is fixed across EM
/// iterations, so its factorization is computed once.
pub struct LinearEmSolver {
    factor: SpdFactor,
    train_design: DMatrix<f64>,
    valid_design: DMatrix<f64>,
    sigma: f64,
}

impl LinearEmSolver {
    pub fn new(
        train: &Dataset,
        valid: &Dataset,
        lambda: f64,
        sigma: f64,
    ) -> Result<Self, PredictorError> {
        if train.is_empty() {
            return Err(PredictorError::EmptyTrainingSet);
        }
        if !(sigma > 0.0 && lambda >= 0.0) {
            return Err(PredictorError::InvalidConfig("need sigma > 0 and lambda >= 0"));
        }
        let train_design = features_matrix(train);  // PROBE: solver without intercept
        let valid_design = features_matrix(valid);
        // PROBE: penalize all columns (no intercept present)
        let p_cols = train_design.ncols();
        let mut a = train_design.transpose() * &train_design / (sigma * sigma);
        for j in 0..p_cols {
            a[(j, j)] += lambda;
        }
        let factor = SpdMatrix::new(a).map_err(map_numerics)?.factor().map_err(map_numerics)?;
        Ok(Self {
            factor,
            train_design,
            valid_design,
            sigma,
        })
    }

    fn means(design: &DMatrix<f64>, model: &LinearPredictor) -> Vec<f64> {
        // PROBE: no intercept column in solver designs
        (design * &model.weights).iter().copied().collect()
    }
}

impl EmSolver for LinearEmSolver {
    type Model = LinearPredictor;

    fn m_step(&mut self, targets: &[f64]) -> Result<LinearPredictor, EmError> {
        // PROBE: bias-free solve
        let t = DVector::from_column_slice(targets);
        let rhs = self.train_design.transpose() * t / (self.sigma * self.sigma);
        let sol = self.factor.solve_vec(&rhs).map_err(map_numerics)?;
        Ok(LinearPredictor { weights: sol, intercept: 0.0 })
    }

    fn train_means(&self, model: &LinearPredictor) -> Vec<f64> {
        Self::means(&self.train_design, model)
    }

    fn valid_means(&self, model: &LinearPredictor) -> Vec<f64> {
        Self::means(&self.valid_design, model)
    }

    fn weight_norm_sq(&self, model: &LinearPredictor) -> f64 {
        model.weight_norm_sq()
    }
}
