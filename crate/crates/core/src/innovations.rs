//! The sample functional Innovations Algorithm on a d-dimensional principal
//! subspace, the Yule–Walker regression route to the same coefficients,
//! FMA(q) model assembly and one-step prediction.
//!
//! Everything operates on score vectors. Lag covariances follow the
//! convention `C_h = E[x_{t+h} x_tᵀ]`, estimated with divisor `n - h`.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::fts::{self, FunctionalSample, Prepared};
use crate::linalg;

/// Hard cap on the default number of lags.
pub const MAX_DEFAULT_LAGS: usize = 25;

/// Default number of lags: `max(q + 1, ⌈n^{1/3}⌉)`, capped at 25 and at `n - 2`.
pub fn default_lags(n: usize, q: usize) -> usize {
    let mut cube_root = 1;
    while cube_root * cube_root * cube_root < n {
        cube_root += 1;
    }
    (q + 1).max(cube_root).min(MAX_DEFAULT_LAGS).min(n.saturating_sub(2)).max(1)
}

/// Score lag covariances `C_0, ..., C_kmax` with divisor `n - h`.
pub fn score_lag_covs(scores: &DMatrix<f64>, kmax: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = scores.nrows();
    if kmax + 2 > n {
        return Err(Error::LagTooLarge { lag: kmax, n });
    }
    Ok((0..=kmax)
        .map(|h| {
            let c = fts::lag_cov_rows(scores, h);
            if h == 0 {
                linalg::symmetrize(&c)
            } else {
                c
            }
        })
        .collect())
}

/// Lagged block covariances from a list of lag covariances.
///
/// `gamma_k` is kd×kd with block `(a, b)` equal to `C_{b-a}` for `a <= b` and
/// `C_{a-b}ᵀ` otherwise, i.e. the covariance of `(x_j, x_{j-1}, ..., x_{j-k+1})`.
/// `gamma_1k` is d×kd with block `b` equal to `C_{b+1}`, the cross covariance
/// of `x_{j+1}` with that stacked vector.
pub fn block_cov_from_covs(covs: &[DMatrix<f64>], k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if k == 0 || covs.len() < k + 1 {
        return Err(Error::InvalidInput(format!(
            "block covariance of order {k} needs lags 0..={k}, got {}",
            covs.len()
        )));
    }
    let d = covs[0].nrows();
    let mut gamma = DMatrix::zeros(k * d, k * d);
    for a in 0..k {
        for b in 0..k {
            let block = if a <= b { covs[b - a].clone() } else { covs[a - b].transpose() };
            gamma.view_mut((a * d, b * d), (d, d)).copy_from(&block);
        }
    }
    let mut gamma1 = DMatrix::zeros(d, k * d);
    for b in 0..k {
        gamma1.view_mut((0, b * d), (d, d)).copy_from(&covs[b + 1]);
    }
    Ok((gamma, gamma1))
}

pub fn block_cov(scores: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let covs = score_lag_covs(scores, k)?;
    block_cov_from_covs(&covs, k)
}

/// Regression coefficients `β_{k,1}, ..., β_{k,k}` of `x_{j+1}` on its last
/// `k` values.
#[derive(Debug, Clone)]
pub struct InverseFilter {
    pub k: usize,
    pub beta: Vec<DMatrix<f64>>,
}

pub fn yule_walker_from_covs(covs: &[DMatrix<f64>], k: usize, ridge: f64) -> Result<InverseFilter> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    let (mut gamma, gamma1) = block_cov_from_covs(covs, k)?;
    let d = covs[0].nrows();
    for i in 0..gamma.nrows() {
        gamma[(i, i)] += ridge;
    }
    let cond = linalg::sym_condition(&gamma)?;
    if !(cond < linalg::SINGULAR_CONDITION) {
        return Err(Error::SingularGamma(cond));
    }
    // B Γ = Γ1  <=>  Γ Bᵀ = Γ1ᵀ since Γ is symmetric.
    let bt = gamma
        .lu()
        .solve(&gamma1.transpose())
        .ok_or(Error::SingularGamma(cond))?;
    let b = bt.transpose();
    let beta = (0..k).map(|i| b.columns(i * d, d).clone_owned()).collect();
    Ok(InverseFilter { k, beta })
}

/// Yule–Walker solution `B̂(k) = Γ̂_{1,k} (Γ̂_k + ridge·I)^{-1}` for the scores.
pub fn yule_walker(scores: &DMatrix<f64>, k: usize, ridge: f64) -> Result<InverseFilter> {
    let covs = score_lag_covs(scores, k)?;
    yule_walker_from_covs(&covs, k, ridge)
}

/// Filters of every order `1..=k`, as needed by [`beta_to_theta`].
pub fn yule_walker_sequence(covs: &[DMatrix<f64>], k: usize, ridge: f64) -> Result<Vec<InverseFilter>> {
    (1..=k).map(|m| yule_walker_from_covs(covs, m, ridge)).collect()
}

/// Triangular array of innovations coefficients; `rows[m-1][i-1]` is `θ_{m,i}`.
pub type ThetaTriangle = Vec<Vec<DMatrix<f64>>>;

/// Converts regression coefficients into innovations coefficients through
/// `θ_{m,i} = Σ_{j=1}^{i} β_{m,j} θ_{m-j,i-j}` with `θ_{·,0} = I`.
///
/// `filters[m-1]` must be the filter of order `m`.
pub fn beta_to_theta(filters: &[InverseFilter]) -> Result<ThetaTriangle> {
    let Some(first) = filters.first() else {
        return Ok(Vec::new());
    };
    let d = first.beta[0].nrows();
    let identity = DMatrix::<f64>::identity(d, d);
    let mut rows: ThetaTriangle = Vec::with_capacity(filters.len());
    for (idx, f) in filters.iter().enumerate() {
        let m = idx + 1;
        if f.k != m || f.beta.len() != m {
            return Err(Error::InvalidInput(format!("filter {idx} has order {} but {m} was expected", f.k)));
        }
        let mut row = Vec::with_capacity(m);
        for i in 1..=m {
            let mut acc = DMatrix::zeros(d, d);
            for j in 1..=i {
                let prev = if i == j { &identity } else { &rows[m - j - 1][i - j - 1] };
                acc += &f.beta[j - 1] * prev;
            }
            row.push(acc);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Output of the Innovations Algorithm run to `k` lags.
#[derive(Debug, Clone)]
pub struct InnovationsFit {
    pub k: usize,
    /// `theta[m-1][i-1] = θ_{m,i}` for `1 <= i <= m <= k`.
    pub theta: ThetaTriangle,
    /// `V_0, ..., V_k`.
    pub v: Vec<DMatrix<f64>>,
    /// Whether any `V_i` needed the ridge fallback to be inverted.
    pub ridged: bool,
}

impl InnovationsFit {
    pub fn theta(&self, m: usize, i: usize) -> &DMatrix<f64> {
        &self.theta[m - 1][i - 1]
    }

    pub fn dim(&self) -> usize {
        self.v[0].nrows()
    }

    /// In-sample one-step predictions `x̂_0, ..., x̂_n` for the score rows,
    /// using row `min(t, k)` of the triangle for observation `t`. The last
    /// row is the forecast of the next, unobserved, score vector.
    pub fn predict(&self, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = scores.nrows();
        let d = self.dim();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if scores.ncols() != d {
            return Err(Error::InvalidInput(format!("scores have {} columns, fit has {d}", scores.ncols())));
        }
        let mut pred = DMatrix::zeros(n + 1, d);
        let mut resid = DMatrix::zeros(n, d);
        for t in 0..=n {
            if t > 0 {
                let m = t.min(self.k);
                let mut acc = DVector::zeros(d);
                for i in 1..=m {
                    acc += self.theta(m, i) * resid.row(t - i).transpose();
                }
                pred.set_row(t, &acc.transpose());
            }
            if t < n {
                let r = scores.row(t) - pred.row(t);
                resid.set_row(t, &r);
            }
        }
        Ok(pred)
    }
}

/// Runs the Innovations Algorithm on score-space lag covariances `C_0..C_k`.
///
/// `V_0 = C_0`; for `m = 1..=k` and `i = 0..m-1`
/// `θ_{m,m-i} = (C_{m-i} - Σ_{j<i} θ_{m,m-j} V_j θ_{i,i-j}ᵀ) V_i^{-1}` and
/// `V_m = C_0 - Σ_{j<m} θ_{m,m-j} V_j θ_{m,m-j}ᵀ`.
pub fn innovations_algorithm(covs: &[DMatrix<f64>], k: usize) -> Result<InnovationsFit> {
    if covs.len() < k + 1 {
        return Err(Error::InvalidInput(format!("{k} lags need {} covariances, got {}", k + 1, covs.len())));
    }
    let c0 = &covs[0];
    let d = c0.nrows();
    if covs.iter().take(k + 1).any(|c| c.nrows() != d || c.ncols() != d) {
        return Err(Error::InvalidInput("lag covariances must all be d×d".into()));
    }
    let asym = linalg::max_asymmetry(c0);
    let scale = linalg::max_abs(c0).max(f64::MIN_POSITIVE);
    if asym > 1e-8 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let c0 = linalg::symmetrize(c0);
    let eig = linalg::sym_eigen(&c0)?;
    let min_eig = eig.values.last().copied().unwrap_or(0.0);
    if min_eig < -1e-8 * c0.trace().abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NonPsdInput(min_eig));
    }

    let mut ridged = false;
    let mut invert = |m: &DMatrix<f64>, index: usize| -> Result<DMatrix<f64>> {
        match linalg::sym_inverse_ridged(m)? {
            Some((inv, r)) => {
                ridged |= r;
                Ok(inv)
            }
            None => Err(Error::SingularV { index }),
        }
    };

    let mut v = vec![c0.clone()];
    let mut v_inv = Vec::with_capacity(k);
    if k > 0 {
        v_inv.push(invert(&c0, 0)?);
    }
    let mut theta: ThetaTriangle = Vec::with_capacity(k);
    for m in 1..=k {
        let mut row = vec![DMatrix::zeros(d, d); m];
        for i in 0..m {
            let mut acc = covs[m - i].clone();
            for j in 0..i {
                acc -= &row[m - j - 1] * &v[j] * theta[i - 1][i - j - 1].transpose();
            }
            row[m - i - 1] = acc * &v_inv[i];
        }
        let mut vm = c0.clone();
        for j in 0..m {
            let t = &row[m - j - 1];
            vm -= t * &v[j] * t.transpose();
        }
        let vm = linalg::symmetrize(&vm);
        if m < k {
            v_inv.push(invert(&vm, m)?);
        }
        v.push(vm);
        theta.push(row);
    }
    Ok(InnovationsFit { k, theta, v, ridged })
}

/// A finite-order vector moving average `x_t = ε_t + Σ_{i≤q} Θ_i ε_{t-i}`
/// with `Cov(ε) = Σ`.
#[derive(Debug, Clone)]
pub struct VmaModel {
    pub theta: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
}

impl VmaModel {
    pub fn q(&self) -> usize {
        self.theta.len()
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// Model autocovariances `Γ(0..=q)`, `Γ(h) = Σ_l Θ_{l+h} Σ Θ_lᵀ` with `Θ_0 = I`.
    pub fn autocov(&self) -> Vec<DMatrix<f64>> {
        let d = self.dim();
        let q = self.q();
        let mut all = vec![DMatrix::<f64>::identity(d, d)];
        all.extend(self.theta.iter().cloned());
        (0..=q)
            .map(|h| {
                let mut g = DMatrix::zeros(d, d);
                for l in 0..=(q - h) {
                    g += &all[l + h] * &self.sigma * all[l].transpose();
                }
                if h == 0 {
                    linalg::symmetrize(&g)
                } else {
                    g
                }
            })
            .collect()
    }

    /// Exact innovations form of the model for a stretch of `n` observations.
    ///
    /// Only lags `1..=q` of each row are non-zero, which keeps the recursion
    /// linear in `n`. Once `V_m` stops changing the last row is reused.
    pub fn innovations(&self, n: usize) -> Result<VmaInnovations> {
        let d = self.dim();
        let q = self.q();
        let gamma = self.autocov();
        let mut rows: Vec<Vec<DMatrix<f64>>> = vec![Vec::new()];
        let mut v = vec![gamma[0].clone()];
        let first = linalg::sym_eigen(&gamma[0])?;
        let mut v_eig = vec![first];
        let mut v_inv = vec![inverse_or_singular(&gamma[0], 0)?];
        let tol = 1e-14 * gamma[0].trace().abs().max(f64::MIN_POSITIVE);
        for m in 1..n {
            // row m holds θ_{m,l} for l = 1..=min(m, q); index l-1
            let width = m.min(q);
            let mut row = vec![DMatrix::zeros(d, d); width];
            let lo = m - width;
            for i in lo..m {
                let lag = m - i;
                let mut acc = gamma[lag].clone();
                for j in lo..i {
                    let inner = i - j;
                    if inner == 0 || inner > rows[i].len() {
                        continue;
                    }
                    acc -= &row[m - j - 1] * &v[j] * rows[i][inner - 1].transpose();
                }
                row[lag - 1] = acc * &v_inv[i];
            }
            let mut vm = gamma[0].clone();
            for j in lo..m {
                let t = &row[m - j - 1];
                vm -= t * &v[j] * t.transpose();
            }
            let vm = linalg::symmetrize(&vm);
            let settled = m > q && (&vm - &v[m - 1]).amax() <= tol;
            v_eig.push(linalg::sym_eigen(&vm)?);
            v_inv.push(inverse_or_singular(&vm, m)?);
            v.push(vm);
            rows.push(row);
            if settled {
                break;
            }
        }
        Ok(VmaInnovations { rows, v, v_inv, v_eig })
    }

    /// Filters `x` (n×d) through the exact innovations predictor.
    pub fn filter(&self, x: &DMatrix<f64>) -> Result<VmaFilterOutput> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if x.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!("scores have {} columns, model has {}", x.ncols(), self.dim())));
        }
        let inn = self.innovations(n)?;
        Ok(inn.filter(x))
    }
}

fn inverse_or_singular(m: &DMatrix<f64>, index: usize) -> Result<DMatrix<f64>> {
    linalg::sym_inverse_ridged(m)?.map(|(inv, _)| inv).ok_or(Error::SingularV { index })
}

/// Innovations coefficients and variances of a [`VmaModel`].
#[derive(Debug, Clone)]
pub struct VmaInnovations {
    rows: Vec<Vec<DMatrix<f64>>>,
    v: Vec<DMatrix<f64>>,
    v_inv: Vec<DMatrix<f64>>,
    v_eig: Vec<linalg::SymEigen>,
}

impl VmaInnovations {
    fn index(&self, t: usize) -> usize {
        t.min(self.rows.len() - 1)
    }

    /// Prediction variance for observation `t` given the `t` before it.
    pub fn v(&self, t: usize) -> &DMatrix<f64> {
        &self.v[self.index(t)]
    }

    pub fn filter(&self, x: &DMatrix<f64>) -> VmaFilterOutput {
        let n = x.nrows();
        let d = x.ncols();
        let mut resid = DMatrix::zeros(n, d);
        let mut loglik = 0.0;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        for t in 0..n {
            let idx = self.index(t);
            let row = &self.rows[idx];
            let mut pred = DVector::zeros(d);
            for (l, theta) in row.iter().enumerate() {
                let lag = l + 1;
                if lag <= t {
                    pred += theta * resid.row(t - lag).transpose();
                }
            }
            let e = x.row(t).transpose() - pred;
            let quad = (e.transpose() * &self.v_inv[idx] * &e)[(0, 0)];
            loglik -= 0.5 * (d as f64 * ln2pi + linalg::sym_logdet(&self.v_eig[idx]) + quad);
            resid.set_row(t, &e.transpose());
        }
        let residual_cov = linalg::symmetrize(&(resid.transpose() * &resid)) / n as f64;
        VmaFilterOutput { residuals: resid, loglik, residual_cov }
    }
}

#[derive(Debug, Clone)]
pub struct VmaFilterOutput {
    pub residuals: DMatrix<f64>,
    /// Gaussian log-likelihood in innovations form.
    pub loglik: f64,
    /// `1/n Σ e_t e_tᵀ` of the one-step residuals.
    pub residual_cov: DMatrix<f64>,
}

/// Fitted VMA(q) on scores: `Θ_i = θ̂_{k,i}` from the Innovations Algorithm
/// and `Σ = V_k`; for `q = 0` the white-noise fit `Σ = C_0`.
pub fn fit_vma(scores: &DMatrix<f64>, q: usize, k: usize) -> Result<VmaModel> {
    let covs = score_lag_covs(scores, k)?;
    if q == 0 {
        return Ok(VmaModel { theta: Vec::new(), sigma: covs[0].clone() });
    }
    if q > k {
        return Err(Error::InvalidInput(format!("order q={q} exceeds the number of lags k={k}")));
    }
    let fit = innovations_algorithm(&covs, k)?;
    Ok(VmaModel {
        theta: (1..=q).map(|i| fit.theta(k, i).clone()).collect(),
        sigma: fit.v[k].clone(),
    })
}

/// A fitted FMA(q) model on an estimated d-dimensional principal subspace.
#[derive(Debug, Clone)]
pub struct FmaModel {
    pub basis: BasisSpec,
    /// D×d.
    pub eigvecs: DMatrix<f64>,
    pub eigvals_all: Vec<f64>,
    pub d: usize,
    pub q: usize,
    pub k_used: usize,
    /// `θ̂_1, ..., θ̂_q` in eigencoordinates.
    pub theta: Vec<DMatrix<f64>>,
    /// Innovation covariance in eigencoordinates.
    pub v: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl FmaModel {
    /// `θ̂_i` (1-based) as a D×D operator on the basis coefficients.
    pub fn embedded_theta(&self, i: usize) -> DMatrix<f64> {
        &self.eigvecs * &self.theta[i - 1] * self.eigvecs.transpose()
    }

    pub fn vma(&self) -> VmaModel {
        VmaModel { theta: self.theta.clone(), sigma: self.v.clone() }
    }

    /// Coordinates of raw coefficient rows in the model's subspace, after
    /// removing the model mean.
    pub fn project(&self, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coeffs.ncols() != self.basis.dim {
            return Err(Error::InvalidInput(format!(
                "data has {} coefficients per curve, model expects {}",
                coeffs.ncols(),
                self.basis.dim
            )));
        }
        let mut centered = coeffs.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * &self.eigvecs)
    }
}

pub fn fit_fma(sample: &FunctionalSample, d: usize, q: usize, k: Option<usize>) -> Result<FmaModel> {
    let prep = Prepared::new(sample)?;
    fit_fma_prepared(&prep, d, q, k)
}

/// [`fit_fma`] on an already centered and decomposed sample.
pub fn fit_fma_prepared(prep: &Prepared, d: usize, q: usize, k: Option<usize>) -> Result<FmaModel> {
    let n = prep.n();
    let dim = prep.sample.dim();
    if d == 0 || d > dim {
        return Err(Error::RankExceeded { requested: d, available: dim });
    }
    let k = k.unwrap_or_else(|| default_lags(n, q));
    if q > k {
        return Err(Error::InvalidInput(format!("order q={q} exceeds the number of lags k={k}")));
    }
    if k + 2 > n {
        return Err(Error::LagTooLarge { lag: k, n });
    }
    let scores = prep.scores(d)?;
    let covs = score_lag_covs(&scores.scores, k)?;
    let (theta, v) = if q == 0 {
        (Vec::new(), covs[0].clone())
    } else {
        let fit = innovations_algorithm(&covs, k)?;
        ((1..=q).map(|i| fit.theta(k, i).clone()).collect(), fit.v[k].clone())
    };
    Ok(FmaModel {
        basis: *prep.sample.basis(),
        eigvecs: prep.eig.leading(d),
        eigvals_all: prep.eig.values.clone(),
        d,
        q,
        k_used: k,
        theta,
        v,
        mean: prep.sample.mean().clone(),
    })
}

/// One-step-ahead forecast in score space and in basis coefficients.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub scores: DVector<f64>,
    pub coeffs: DVector<f64>,
}

/// Forecast of the curve following the rows of `coeffs`.
///
/// Runs `x̂_{t} = Σ_{i≤min(t,q)} θ̂_i (x_{t-i} - x̂_{t-i})` forward through the
/// data, maps the final forecast back through the eigenvectors and re-adds
/// the model mean.
pub fn predict_one_step(model: &FmaModel, coeffs: &DMatrix<f64>) -> Result<Prediction> {
    let n = coeffs.nrows();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let x = model.project(coeffs)?;
    let d = model.d;
    let mut resid: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut next = DVector::zeros(d);
    for t in 0..=n {
        let mut pred = DVector::zeros(d);
        for i in 1..=model.q.min(t) {
            pred += &model.theta[i - 1] * &resid[t - i];
        }
        if t < n {
            resid.push(x.row(t).transpose() - &pred);
        } else {
            next = pred;
        }
    }
    let coeffs = &model.eigvecs * &next + &model.mean;
    Ok(Prediction { scores: next, coeffs })
}
