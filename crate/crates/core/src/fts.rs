//! Centering, lag-h covariance operators, functional principal components
//! and score extraction.
//!
//! Curves are carried as rows of basis coefficients. Because the basis is
//! orthonormal, an operator on the spanned subspace is a D×D matrix and
//! inner products of curves are dot products of coefficient rows.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on column means for a sample flagged as centered.
const CENTER_TOL: f64 = 1e-10;

/// n curves as coefficient rows, plus the mean that was removed from them.
#[derive(Debug, Clone)]
pub struct FunctionalSample {
    coeffs: DMatrix<f64>,
    basis: BasisSpec,
    mean: DVector<f64>,
    centered: bool,
}

impl FunctionalSample {
    pub fn new(coeffs: DMatrix<f64>, basis: BasisSpec) -> Result<Self> {
        if coeffs.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "a functional sample needs at least 2 curves, got {}",
                coeffs.nrows()
            )));
        }
        if coeffs.ncols() != basis.dim {
            return Err(Error::InvalidInput(format!(
                "coefficient table has {} columns but the basis has {} functions",
                coeffs.ncols(),
                basis.dim
            )));
        }
        if !linalg::all_finite(&coeffs) {
            return Err(Error::NonFiniteInput("coefficient table"));
        }
        let dim = basis.dim;
        Ok(Self { coeffs, basis, mean: DVector::zeros(dim), centered: false })
    }

    /// Builds a sample in the Fourier basis whose dimension is the column count.
    pub fn from_coeffs(coeffs: DMatrix<f64>) -> Result<Self> {
        let basis = BasisSpec::fourier(coeffs.ncols())?;
        Self::new(coeffs, basis)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Number of eigen-directions that can carry sample variance.
    pub fn available_rank(&self) -> usize {
        (self.n() - 1).min(self.dim())
    }

    /// Subtracts column means and records them. Idempotent.
    pub fn center(&self) -> FunctionalSample {
        if self.centered {
            return self.clone();
        }
        let n = self.n() as f64;
        let col_mean = DVector::from_fn(self.dim(), |c, _| self.coeffs.column(c).sum() / n);
        let mut coeffs = self.coeffs.clone();
        for mut row in coeffs.row_iter_mut() {
            row -= col_mean.transpose();
        }
        FunctionalSample {
            coeffs,
            basis: self.basis,
            mean: &self.mean + col_mean,
            centered: true,
        }
    }

    pub fn max_abs_column_mean(&self) -> f64 {
        let n = self.n() as f64;
        (0..self.dim()).map(|c| (self.coeffs.column(c).sum() / n).abs()).fold(0.0, f64::max)
    }

    pub fn satisfies_center_invariant(&self) -> bool {
        !self.centered || self.max_abs_column_mean() < CENTER_TOL
    }
}

/// Empirical lag-h covariance operator.
///
/// `op` is the matrix representation of the operator, `op = 1/(n-h) Σ x_{j+h} x_jᵀ`,
/// so for an FMA(1) process it estimates `θ₁ C_ε`.
#[derive(Debug, Clone)]
pub struct LagCov {
    pub h: usize,
    pub op: DMatrix<f64>,
}

/// `1/(n-h) Σ_j x_{j+h} x_jᵀ` over the rows of `x`.
pub fn lag_cov_rows(x: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    lag_cov_rows_div(x, h, (x.nrows() - h) as f64)
}

/// Same sum with an explicit divisor.
pub fn lag_cov_rows_div(x: &DMatrix<f64>, h: usize, divisor: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let lead = x.rows(h, n - h);
    let lag = x.rows(0, n - h);
    (lead.transpose() * lag) / divisor
}

pub fn lag_cov(sample: &FunctionalSample, h: usize) -> Result<LagCov> {
    if !sample.is_centered() {
        return Err(Error::NotCentered);
    }
    let n = sample.n();
    if h + 2 > n {
        return Err(Error::LagTooLarge { lag: h, n });
    }
    let mut op = lag_cov_rows(sample.coeffs(), h);
    if h == 0 {
        op = linalg::symmetrize(&op);
    }
    Ok(LagCov { h, op })
}

/// Ordered eigenpairs of a covariance operator.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    /// D×r, orthonormal columns.
    pub vectors: DMatrix<f64>,
    /// Sum of all D eigenvalues (the trace of the input).
    pub total_trace: f64,
}

impl EigenSystem {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// The first `d` eigenvectors.
    pub fn leading(&self, d: usize) -> DMatrix<f64> {
        self.vectors.columns(0, d).clone_owned()
    }

    /// `Σ_{i>d} λ̂_i` over the stored eigenvalues.
    pub fn tail_sum(&self, d: usize) -> f64 {
        self.values.iter().skip(d).sum()
    }
}

/// Leading `r` eigenpairs of a lag-0 covariance.
///
/// Negative eigenvalues produced by rounding are clamped to zero.
pub fn fpca(cov: &LagCov, r: usize) -> Result<EigenSystem> {
    if cov.h != 0 {
        return Err(Error::InvalidInput(format!("fpca needs a lag-0 covariance, got lag {}", cov.h)));
    }
    let dim = cov.op.nrows();
    if r == 0 || r > dim {
        return Err(Error::RankExceeded { requested: r, available: dim });
    }
    let asym = linalg::max_asymmetry(&cov.op);
    if asym > 1e-10 * (1.0 + linalg::max_abs(&cov.op)) {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = linalg::sym_eigen(&cov.op)?;
    let values: Vec<f64> = eig.values.iter().take(r).map(|v| v.max(0.0)).collect();
    Ok(EigenSystem {
        values,
        vectors: eig.vectors.columns(0, r).clone_owned(),
        total_trace: cov.op.trace(),
    })
}

/// Smallest `d` whose leading eigenvalues explain at least a fraction `p`
/// of the total variance.
pub fn tve(eig: &EigenSystem, p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidFraction(p));
    }
    let total = eig.total_trace;
    let mut acc = 0.0;
    for (i, v) in eig.values.iter().enumerate() {
        acc += v;
        // relative slack absorbs rounding in exact-boundary cases like 8/10 = 0.8
        if acc >= p * total * (1.0 - 1e-12) {
            return Ok(i + 1);
        }
    }
    Err(Error::RankExceeded { requested: eig.rank() + 1, available: eig.rank() })
}

/// Scores on the first `d` principal directions.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    /// n×d, column i holds `⟨X_j, ν̂_i⟩`.
    pub scores: DMatrix<f64>,
    pub d: usize,
}

impl ScoreMatrix {
    pub fn n(&self) -> usize {
        self.scores.nrows()
    }
}

pub fn scores(sample: &FunctionalSample, eig: &EigenSystem, d: usize) -> Result<ScoreMatrix> {
    if d > eig.rank() {
        return Err(Error::RankExceeded { requested: d, available: eig.rank() });
    }
    Ok(ScoreMatrix { scores: sample.coeffs() * eig.vectors.columns(0, d), d })
}

/// A centered sample together with its full eigendecomposition, the shared
/// starting point of every fit.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub sample: FunctionalSample,
    pub cov: LagCov,
    pub eig: EigenSystem,
}

impl Prepared {
    pub fn new(sample: &FunctionalSample) -> Result<Self> {
        let sample = sample.center();
        let cov = lag_cov(&sample, 0)?;
        let eig = fpca(&cov, sample.dim())?;
        Ok(Self { sample, cov, eig })
    }

    pub fn n(&self) -> usize {
        self.sample.n()
    }

    pub fn available_rank(&self) -> usize {
        self.sample.available_rank()
    }

    pub fn scores(&self, d: usize) -> Result<ScoreMatrix> {
        scores(&self.sample, &self.eig, d)
    }

    /// Scores on directions `from+1 ..= from+count`.
    pub fn tail_scores(&self, from: usize, count: usize) -> Result<DMatrix<f64>> {
        if from + count > self.eig.rank() {
            return Err(Error::RankExceeded { requested: from + count, available: self.eig.rank() });
        }
        Ok(self.sample.coeffs() * self.eig.vectors.columns(from, count))
    }

    /// Eigenvalue tail `Σ_{i>d} λ̂_i`, truncated at the available rank.
    pub fn eigen_tail(&self, d: usize) -> f64 {
        self.eig.values.iter().take(self.available_rank()).skip(d).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy() -> FunctionalSample {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, -1.0, 5.0, 0.5]);
        FunctionalSample::from_coeffs(c).unwrap()
    }

    #[test]
    fn center_matches_hand_average() {
        let s = toy().center();
        assert_abs_diff_eq!(s.mean()[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mean()[1], 0.5, epsilon = 1e-15);
        assert!(s.max_abs_column_mean() < 1e-15);
    }

    #[test]
    fn center_is_idempotent() {
        let s = toy().center();
        let t = s.center();
        assert_eq!(s.coeffs(), t.coeffs());
        assert_eq!(s.mean(), t.mean());
        // a centered table entered fresh keeps its values and gets mean 0
        let fresh = FunctionalSample::from_coeffs(s.coeffs().clone()).unwrap().center();
        assert!(fresh.mean().amax() < 1e-15);
        assert_abs_diff_eq!((fresh.coeffs() - s.coeffs()).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_shift_is_recovered_by_mean() {
        let base = toy().center();
        let shift = [0.25, -4.0];
        let mut c = base.coeffs().clone();
        for mut row in c.row_iter_mut() {
            row[0] += shift[0];
            row[1] += shift[1];
        }
        let s = FunctionalSample::from_coeffs(c).unwrap().center();
        assert_abs_diff_eq!(s.mean()[0], shift[0], epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean()[1], shift[1], epsilon = 1e-12);
    }

    #[test]
    fn lag_cov_errors() {
        let s = toy();
        assert!(matches!(lag_cov(&s, 0), Err(Error::NotCentered)));
        let s = s.center();
        assert!(matches!(lag_cov(&s, 2), Err(Error::LagTooLarge { .. })));
        assert!(lag_cov(&s, 1).is_ok());
    }

    #[test]
    fn tve_boundaries() {
        let eig = EigenSystem {
            values: vec![8.0, 1.0, 1.0],
            vectors: DMatrix::identity(3, 3),
            total_trace: 10.0,
        };
        assert_eq!(tve(&eig, 0.8).unwrap(), 1);
        assert_eq!(tve(&eig, 0.81).unwrap(), 2);
        assert!(matches!(tve(&eig, 1.0), Err(Error::InvalidFraction(_))));
        assert!(matches!(tve(&eig, 0.0), Err(Error::InvalidFraction(_))));
    }

    #[test]
    fn fpca_rejects_asymmetric_and_lagged_input() {
        let op = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(fpca(&LagCov { h: 0, op: op.clone() }, 2), Err(Error::NotSymmetric(_))));
        assert!(fpca(&LagCov { h: 1, op }, 2).is_err());
    }

    #[test]
    fn full_scores_with_identity_vectors_are_coefficients() {
        let s = toy().center();
        let eig = EigenSystem { values: vec![1.0, 1.0], vectors: DMatrix::identity(2, 2), total_trace: 2.0 };
        let sc = scores(&s, &eig, 2).unwrap();
        assert_eq!(&sc.scores, s.coeffs());
        assert!(matches!(scores(&s, &eig, 3), Err(Error::RankExceeded { .. })));
    }
}
