//! Monte Carlo generation of FMA(q) functional time series in a Fourier
//! coefficient space.
//!
//! Innovations are curves whose D basis coefficients are independent
//! `N(0, σ_i²)`. The operators `θ_ℓ = κ_ℓ θ̃_ℓ` are random matrices with a
//! prescribed entry scale, normalized to unit spectral norm.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::fts::FunctionalSample;
use crate::linalg;

const DEGENERATE_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaProfile {
    /// `σ_i = 1/i`.
    Slow,
    /// `σ_i = 2^{-i}`.
    Fast,
}

impl SigmaProfile {
    pub fn sigmas(self, dim: usize) -> Vec<f64> {
        (1..=dim)
            .map(|i| match self {
                SigmaProfile::Slow => 1.0 / i as f64,
                SigmaProfile::Fast => 0.5f64.powi(i as i32),
            })
            .collect()
    }
}

impl std::str::FromStr for SigmaProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slow" => Ok(Self::Slow),
            "fast" => Ok(Self::Fast),
            other => Err(Error::Parse(format!("unknown sigma profile '{other}' (expected slow or fast)"))),
        }
    }
}

/// Scale of entry `(i, i')` of the raw operator draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorScale {
    /// Standard deviation `σ_i σ_{i'}`.
    #[default]
    Product,
    /// Variance `σ_i σ_{i'}`.
    SqrtProduct,
}

impl OperatorScale {
    fn std(self, si: f64, sj: f64) -> f64 {
        match self {
            OperatorScale::Product => si * sj,
            OperatorScale::SqrtProduct => (si * sj).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Basis dimension D.
    pub dim: usize,
    pub q: usize,
    /// `κ_1..κ_q`.
    pub kappas: Vec<f64>,
    pub sigma_profile: SigmaProfile,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub operator_scale: OperatorScale,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("D must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidInput("n must be at least 2".into()));
        }
        if self.kappas.len() != self.q {
            return Err(Error::InvalidInput(format!("q = {} but {} kappas were given", self.q, self.kappas.len())));
        }
        if self.kappas.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::InvalidInput("kappas must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        self.q
    }
}

/// The operators and noise scales that generated a simulated sample.
#[derive(Debug, Clone)]
pub struct TrueModel {
    /// `θ_ℓ = κ_ℓ θ̃_ℓ`, D×D.
    pub theta: Vec<DMatrix<f64>>,
    /// Unit-norm `θ̃_ℓ`.
    pub theta_unit: Vec<DMatrix<f64>>,
    /// Innovation standard deviations per basis coordinate.
    pub sigma: Vec<f64>,
    pub companion_radius: f64,
    pub invertible: bool,
}

impl TrueModel {
    /// `C_ε = diag(σ²)`.
    pub fn innovation_cov(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.sigma.len(), self.sigma.iter().map(|s| s * s)))
    }

    /// Population lag-h covariance `Σ_l θ_{l+h} C_ε θ_lᵀ` with `θ_0 = I`.
    pub fn lag_cov(&self, h: usize) -> DMatrix<f64> {
        let dim = self.sigma.len();
        let q = self.theta.len();
        if h > q {
            return DMatrix::zeros(dim, dim);
        }
        let ce = self.innovation_cov();
        let op = |l: usize| if l == 0 { DMatrix::identity(dim, dim) } else { self.theta[l - 1].clone() };
        (0..=(q - h)).fold(DMatrix::zeros(dim, dim), |acc, l| acc + op(l + h) * &ce * op(l).transpose())
    }
}

/// Independent stream for replication `rep` of a study seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draws a D×D matrix with independent `N(0, s_{ii'}²)` entries, `s` given
/// by `scale`, and divides it by its spectral norm.
pub fn random_operator<R: Rng + ?Sized>(sigma: &[f64], scale: OperatorScale, rng: &mut R) -> Result<DMatrix<f64>> {
    if sigma.is_empty() || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidInput("sigma entries must be positive and finite".into()));
    }
    let dim = sigma.len();
    for _ in 0..DEGENERATE_RETRIES {
        let mut raw = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                raw[(i, j)] = z * scale.std(sigma[i], sigma[j]);
            }
        }
        let norm = linalg::spectral_norm_tol(&raw, 1e-12);
        if norm > f64::MIN_POSITIVE.sqrt() && norm.is_finite() {
            return Ok(raw / norm);
        }
    }
    Err(Error::DegenerateDraw(DEGENERATE_RETRIES))
}

/// Spectral radius of the qD×qD block companion matrix
/// `[[-θ_1, ..., -θ_q], [I, 0, ...], ...]`. The MA polynomial
/// `I + Σ θ_ℓ z^ℓ` is invertible on the closed unit disc iff this is < 1.
pub fn companion_radius(theta: &[DMatrix<f64>]) -> f64 {
    let q = theta.len();
    if q == 0 {
        return 0.0;
    }
    let dim = theta[0].nrows();
    let size = q * dim;
    let mut comp = DMatrix::zeros(size, size);
    for (l, t) in theta.iter().enumerate() {
        comp.view_mut((0, l * dim), (dim, dim)).copy_from(&(-t));
    }
    for b in 1..q {
        for i in 0..dim {
            comp[(b * dim + i, (b - 1) * dim + i)] = 1.0;
        }
    }
    comp.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Draws the true operators for `config` from `rng`.
pub fn draw_true_model<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<TrueModel> {
    config.validate()?;
    let sigma = config.sigma_profile.sigmas(config.dim);
    let mut theta_unit = Vec::with_capacity(config.q);
    for _ in 0..config.q {
        theta_unit.push(random_operator(&sigma, config.operator_scale, rng)?);
    }
    let theta: Vec<DMatrix<f64>> = theta_unit.iter().zip(&config.kappas).map(|(t, k)| t * *k).collect();
    let companion_radius = companion_radius(&theta);
    Ok(TrueModel { theta, theta_unit, sigma, companion_radius, invertible: companion_radius < 1.0 })
}

/// Generates `n` curves from the moving average `X_j = ε_j + Σ_ℓ θ_ℓ ε_{j-ℓ}`
/// driven by `n + q` innovations.
pub fn simulate_from_model<R: Rng + ?Sized>(model: &TrueModel, n: usize, rng: &mut R) -> Result<FunctionalSample> {
    let dim = model.sigma.len();
    let q = model.theta.len();
    let total = n + q;
    let mut eps = DMatrix::zeros(total, dim);
    for r in 0..total {
        for (c, s) in model.sigma.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            eps[(r, c)] = z * s;
        }
    }
    let mut x = eps.rows(q, n).clone_owned();
    for (l, th) in model.theta.iter().enumerate() {
        let lag = l + 1;
        x += eps.rows(q - lag, n) * th.transpose();
    }
    FunctionalSample::new(x, BasisSpec::fourier(dim)?)
}

/// Simulation with an explicit generator; the operators are drawn first,
/// then the innovations.
pub fn simulate_fma_with_rng<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<(FunctionalSample, TrueModel)> {
    let model = draw_true_model(config, rng)?;
    let sample = simulate_from_model(&model, config.n, rng)?;
    Ok((sample, model))
}

/// Simulation seeded from `config.seed`. A companion radius of 1 or more
/// produces a warning on stderr and is recorded in the returned model.
pub fn simulate_fma(config: &SimConfig) -> Result<(FunctionalSample, TrueModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let out = simulate_fma_with_rng(config, &mut rng)?;
    if !out.1.invertible {
        eprintln!(
            "warning: simulated operators are not invertible (companion spectral radius {:.4})",
            out.1.companion_radius
        );
    }
    Ok(out)
}
