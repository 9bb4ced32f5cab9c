//! Stable special functions, signed log-domain arithmetic, SPD linear
//! solves, and a quadrature oracle for posterior moments.
//!
//! Everything that multiplies `exp(B)`-scale quantities goes through the
//! log domain: auction prices in the tens-to-hundreds overflow `exp` in
//! linear arithmetic.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

mod quad;

pub use quad::quad_posterior_moment;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row},{col}): {lower} vs {upper}")]
    NotSymmetric { row: usize, col: usize, lower: f64, upper: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: matrix is {dim}x{dim}, right-hand side has {rhs} rows")]
    RhsMismatch { dim: usize, rhs: usize },
    #[error("quadrature did not converge within {evals} integrand evaluations")]
    NonConvergence { evals: usize },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

/// Standard normal density.
pub fn std_normal_pdf(t: f64) -> f64 {
    log_std_normal_pdf(t).exp()
}

/// Log of the standard normal density.
pub fn log_std_normal_pdf(t: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * t * t
}

/// Standard normal CDF.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Log of the standard normal CDF, accurate deep into the left tail
/// (no premature `-inf`; usable at `t = -38` and far beyond).
pub fn log_std_normal_cdf(t: f64) -> f64 {
    if t >= 5.0 {
        // log(1 - Phi(-t)): absolute accuracy near zero
        (-std_normal_cdf(-t)).ln_1p()
    } else if t > -20.0 {
        std_normal_cdf(t).ln()
    } else {
        // Asymptotic tail: Phi(t) = phi(t)/(-t) * sum_k (-1)^k (2k-1)!!/t^{2k}.
        // At |t| >= 20 ten terms reach f64 precision.
        let inv_t2 = 1.0 / (t * t);
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..=10u32 {
            term *= -(2.0 * f64::from(k) - 1.0) * inv_t2;
            series += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        log_std_normal_pdf(t) - (-t).ln() + series.ln()
    }
}

/// Log of `Phi(hi) - Phi(lo)` for `hi >= lo`, computed without catastrophic
/// cancellation by working with whichever tail is smaller.
pub fn log_std_normal_cdf_diff(hi: f64, lo: f64) -> f64 {
    debug_assert!(hi >= lo);
    if hi == lo {
        return f64::NEG_INFINITY;
    }
    if hi <= 0.0 {
        let la = log_std_normal_cdf(hi);
        let lb = log_std_normal_cdf(lo);
        la + log1mexp(lb - la)
    } else if lo >= 0.0 {
        // Phi(hi) - Phi(lo) = Phi(-lo) - Phi(-hi)
        let la = log_std_normal_cdf(-lo);
        let lb = log_std_normal_cdf(-hi);
        la + log1mexp(lb - la)
    } else {
        // Interval straddles zero: 1 - Phi(-hi) - Phi(lo). Both subtrahends
        // are < 1/2, so the linear-domain sum is benign.
        (-(std_normal_cdf(-hi) + std_normal_cdf(lo))).ln_1p()
    }
}

/// `ln(1 - exp(t))` for `t <= 0`.
fn log1mexp(t: f64) -> f64 {
    // Tiny positive t can appear from rounding in log-CDF differences.
    debug_assert!(t <= 1e-12);
    let t = t.min(0.0);
    if t == 0.0 {
        f64::NEG_INFINITY
    } else if t < -std::f64::consts::LN_2 {
        (-t.exp()).ln_1p()
    } else {
        (-t.exp_m1()).ln()
    }
}

/// A real number stored as sign and log-magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    /// `-1.0`, `0.0`, or `1.0`.
    pub sign: f64,
    /// `ln |value|`; `-inf` encodes zero.
    pub ln_abs: f64,
}

impl SignedLog {
    pub fn pos(ln_abs: f64) -> Self {
        Self { sign: 1.0, ln_abs }
    }

    pub fn neg(ln_abs: f64) -> Self {
        Self { sign: -1.0, ln_abs }
    }

    pub fn zero() -> Self {
        Self { sign: 0.0, ln_abs: f64::NEG_INFINITY }
    }

    pub fn with_sign(sign: f64, ln_abs: f64) -> Self {
        if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
            Self::zero()
        } else {
            Self { sign: sign.signum(), ln_abs }
        }
    }

    pub fn value(&self) -> f64 {
        self.sign * self.ln_abs.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0.0 || self.ln_abs == f64::NEG_INFINITY
    }
}

/// Signed log-domain sum. Exact cancellation yields magnitude `-inf`.
pub fn log_sum_exp(terms: &[SignedLog]) -> SignedLog {
    assert!(!terms.is_empty(), "log_sum_exp over an empty list");
    let m = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.ln_abs)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return SignedLog::zero();
    }
    let s: f64 = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.sign * (t.ln_abs - m).exp())
        .sum();
    if s == 0.0 {
        SignedLog::zero()
    } else {
        SignedLog::with_sign(s.signum(), m + s.abs().ln())
    }
}

/// Dense symmetric positive-definite matrix, validated on construction.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    inner: DMatrix<f64>,
}

impl SpdMatrix {
    /// Checks squareness and symmetry (1e-12 relative). Positive
    /// definiteness is only established by [`SpdMatrix::factor`].
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, NumericsError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(NumericsError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        for i in 0..matrix.nrows() {
            for j in (i + 1)..matrix.ncols() {
                let a = matrix[(i, j)];
                let b = matrix[(j, i)];
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(NumericsError::NotSymmetric {
                        row: j,
                        col: i,
                        lower: b,
                        upper: a,
                    });
                }
            }
        }
        Ok(Self { inner: matrix })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    /// Cholesky factorization; fails if the matrix is not positive definite.
    ///
    /// A factorization whose smallest pivot is below `1e-7` of the largest
    /// is also rejected: an exactly singular matrix often rounds to such
    /// pivots instead of failing outright, and at that conditioning the
    /// solve carries no f64 accuracy anyway.
    pub fn factor(&self) -> Result<SpdFactor, NumericsError> {
        let chol = self
            .inner
            .clone()
            .cholesky()
            .ok_or(NumericsError::NotPositiveDefinite)?;
        let diag = chol.l_dirty();
        let (mut min_pivot, mut max_pivot) = (f64::INFINITY, 0.0f64);
        for i in 0..self.inner.nrows() {
            let d = diag[(i, i)];
            min_pivot = min_pivot.min(d);
            max_pivot = max_pivot.max(d);
        }
        if min_pivot <= 1e-7 * max_pivot {
            return Err(NumericsError::NotPositiveDefinite);
        }
        Ok(SpdFactor {
            chol,
            dim: self.inner.nrows(),
        })
    }
}

/// Immutable Cholesky factorization of an [`SpdMatrix`].
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    dim: usize,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, NumericsError> {
        if rhs.nrows() != self.dim {
            return Err(NumericsError::RhsMismatch { dim: self.dim, rhs: rhs.nrows() });
        }
        Ok(self.chol.solve(rhs))
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
        if rhs.nrows() != self.dim {
            return Err(NumericsError::RhsMismatch { dim: self.dim, rhs: rhs.nrows() });
        }
        Ok(self.chol.solve(rhs))
    }
}

/// Solves `A x = rhs` for SPD `A` via Cholesky.
pub fn solve_spd(a: &SpdMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>, NumericsError> {
    a.factor()?.solve_vec(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;

    #[test]
    fn pdf_values() {
        assert_relative_eq!(std_normal_pdf(0.0), 0.3989422804014327, max_relative = 1e-15);
        assert_relative_eq!(std_normal_pdf(1.0), 0.24197072451914337, max_relative = 1e-14);
        assert_eq!(std_normal_pdf(40.0), 0.0);
        for t in [0.3, 1.7, 5.5] {
            assert_eq!(std_normal_pdf(t), std_normal_pdf(-t));
        }
    }

    #[test]
    fn cdf_values() {
        assert_relative_eq!(std_normal_cdf(0.0), 0.5, max_relative = 1e-15);
        // high-precision reference values
        assert_relative_eq!(std_normal_cdf(1.96), 0.9750021048517796, max_relative = 1e-14);
        assert_relative_eq!(std_normal_cdf(0.5), 0.6914624612740131, max_relative = 1e-14);
        for t in [0.1, 0.5, 1.0, 2.0, 4.0, 8.0] {
            assert!((std_normal_cdf(t) + std_normal_cdf(-t) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn log_cdf_matches_reference_in_tail() {
        // (t, log Phi(t)) computed with 40-digit arithmetic
        let cases = [
            (-5.0, -15.064998393988726),
            (-10.0, -53.23128515051247),
            (-19.5, -194.0169657774975),
            (-20.0, -203.91715537109726),
            (-20.5, -214.0667289632638),
            (-25.0, -316.63940800802026),
            (-38.0, -726.5572160188201),
            (-50.0, -1254.8313611394199),
            (-100.0, -5005.524208694205),
            (3.0, -1.3508099647481938e-3),
            (8.0, -6.220960574271786e-16),
        ];
        for (t, expected) in cases {
            assert_relative_eq!(log_std_normal_cdf(t), expected, max_relative = 1e-13);
        }
        assert!(log_std_normal_cdf(-1e6).is_finite());
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        // Phi(t+h) - Phi(t-h) equals Phi(-t+h) - Phi(-t-h); evaluate on the
        // lower tail, where the CDF carries full relative precision (near 1
        // the difference would drown in representation granularity).
        let h = 1e-6;
        let mut t: f64 = -6.0;
        while t <= 6.0 {
            let s = -t.abs();
            let fd = (std_normal_cdf(s + h) - std_normal_cdf(s - h)) / (2.0 * h);
            assert_relative_eq!(fd, std_normal_pdf(t), max_relative = 1e-6);
            t += 0.25;
        }
    }

    #[test]
    fn log_cdf_diff_routes() {
        // both negative, both positive, straddling zero
        let cases = [(-1.0, -2.0), (2.0, 1.0), (0.5, -0.5), (13.0, 11.5), (-11.5, -13.0)];
        for (hi, lo) in cases {
            let expected = std_normal_cdf(hi) - std_normal_cdf(lo);
            assert_relative_eq!(
                log_std_normal_cdf_diff(hi, lo).exp(),
                expected,
                max_relative = 1e-13
            );
        }
        assert_eq!(log_std_normal_cdf_diff(1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_examples() {
        let two = log_sum_exp(&[SignedLog::pos(0.0), SignedLog::pos(0.0)]);
        assert_relative_eq!(two.ln_abs, std::f64::consts::LN_2, max_relative = 1e-15);
        assert_eq!(two.sign, 1.0);

        let big = log_sum_exp(&[SignedLog::pos(1000.0), SignedLog::pos(1000.0)]);
        assert_relative_eq!(big.ln_abs, 1000.0 + std::f64::consts::LN_2, max_relative = 1e-15);

        let cancel = log_sum_exp(&[SignedLog::pos(5.0), SignedLog::neg(5.0)]);
        assert!(cancel.is_zero());
        assert_eq!(cancel.ln_abs, f64::NEG_INFINITY);

        let mixed = log_sum_exp(&[SignedLog::pos(2.0), SignedLog::neg(1.0), SignedLog::zero()]);
        assert_relative_eq!(mixed.value(), 2.0f64.exp() - 1.0f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let eye = SpdMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(solve_spd(&eye, &v).unwrap(), v);

        let diag = SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]))).unwrap();
        let x = solve_spd(&diag, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert_relative_eq!(x[0], 1.0);
        assert_relative_eq!(x[1], 2.0);
    }

    #[test]
    fn asymmetric_and_indefinite_rejected() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(matches!(SpdMatrix::new(m), Err(NumericsError::NotSymmetric { .. })));

        let indef = SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))).unwrap();
        assert!(matches!(indef.factor(), Err(NumericsError::NotPositiveDefinite)));
    }

    fn random_spd(n: usize, rng: &mut impl Rng) -> SpdMatrix {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let a = (&m * m.transpose()) / n as f64 + DMatrix::identity(n, n);
        SpdMatrix::new(a).unwrap()
    }

    #[test]
    fn solve_residual_up_to_200() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [5usize, 40, 200] {
            let a = random_spd(n, &mut rng);
            let rhs = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let x = solve_spd(&a, &rhs).unwrap();
            let resid = (a.as_matrix() * &x - &rhs).norm();
            assert!(
                resid <= 1e-10 * rhs.norm(),
                "n={n}: residual {resid:e} too large"
            );
        }
    }

    proptest! {
        #[test]
        fn log_sum_exp_agrees_with_linear_domain(values in proptest::collection::vec(-20.0..20.0f64, 1..8)) {
            let terms: Vec<SignedLog> = values
                .iter()
                .map(|&v| SignedLog::with_sign(v.signum(), v.abs().max(1e-300).ln()))
                .collect();
            let direct: f64 = values.iter().sum();
            let got = log_sum_exp(&terms).value();
            prop_assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}
