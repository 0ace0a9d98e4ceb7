//! FMA(1) estimators used for comparison: direction-wise projection of the
//! quadratic operator equation `θ² C₁ᵀ - θ C₀ + C₁ = 0`, a fixed-point
//! iteration on the same equation, and the Innovations Algorithm estimate.
//!
//! All three work in the estimated d-dimensional eigencoordinates and are
//! embedded back into the D-dimensional coefficient space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fts::{self, FunctionalSample, Prepared};
use crate::innovations::fit_fma_prepared;
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;
/// Iterates larger than this (max-abs) are treated as divergence.
const DIVERGENCE_BOUND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fma1Method {
    #[serde(rename = "proj")]
    Projection,
    #[serde(rename = "iter")]
    Iterative,
    #[serde(rename = "inn")]
    Innovations,
}

impl Fma1Method {
    pub const ALL: [Fma1Method; 3] = [Fma1Method::Projection, Fma1Method::Iterative, Fma1Method::Innovations];

    pub fn label(self) -> &'static str {
        match self {
            Fma1Method::Projection => "proj",
            Fma1Method::Iterative => "iter",
            Fma1Method::Innovations => "inn",
        }
    }
}

impl std::str::FromStr for Fma1Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proj" => Ok(Self::Projection),
            "iter" => Ok(Self::Iterative),
            "inn" => Ok(Self::Innovations),
            other => Err(Error::Parse(format!("unknown method '{other}' (expected proj, iter or inn)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    /// `‖θ̂² C₁ᵀ - θ̂ C₀ + C₁‖` in the d-space (spectral norm).
    pub residual_norm: f64,
    pub converged: bool,
    /// Directions for which the projected quadratic had no root inside the
    /// unit interval.
    pub no_admissible_root: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Fma1Estimate {
    /// d×d, eigencoordinates.
    pub theta_hat: DMatrix<f64>,
    /// D×D, `Ê θ̂ Êᵀ`.
    pub embedded: DMatrix<f64>,
    pub method: Fma1Method,
    pub diagnostics: Diagnostics,
}

/// Quantities shared by all three estimators for one sample.
#[derive(Debug, Clone)]
pub struct Fma1Context {
    pub prep: Prepared,
    /// Lag-1 covariance in coefficient space.
    pub c1: DMatrix<f64>,
}

impl Fma1Context {
    pub fn new(sample: &FunctionalSample) -> Result<Self> {
        Self::from_prepared(Prepared::new(sample)?)
    }

    pub fn from_prepared(prep: Prepared) -> Result<Self> {
        let c1 = fts::lag_cov(&prep.sample, 1)?.op;
        Ok(Self { prep, c1 })
    }

    fn check_d(&self, d: usize) -> Result<()> {
        let rank = self.prep.available_rank();
        if d == 0 || d > rank {
            return Err(Error::RankExceeded { requested: d, available: rank });
        }
        Ok(())
    }

    /// `(ÊᵀC₀Ê, ÊᵀC₁Ê)` for the first d directions.
    pub fn projected(&self, d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let e = self.prep.eig.leading(d);
        let c0 = linalg::symmetrize(&(e.transpose() * &self.prep.cov.op * &e));
        let c1 = e.transpose() * &self.c1 * &e;
        (c0, c1)
    }

    fn embed(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        let e = self.prep.eig.leading(theta.nrows());
        &e * theta * e.transpose()
    }
}

/// `‖θ² C₁ᵀ - θ C₀ + C₁‖`.
pub fn fixed_point_residual(theta: &DMatrix<f64>, c0: &DMatrix<f64>, c1: &DMatrix<f64>) -> f64 {
    linalg::spectral_norm(&(theta * theta * c1.transpose() - theta * c0 + c1))
}

/// Root of `c x² - λ x + c = 0` on the invertible side.
///
/// Returns the root of smaller modulus and whether it is admissible
/// (`|x| < 1`). With a negative discriminant the quadratic has no real root
/// and `λ/(2c)`, the vertex, is returned flagged.
pub fn projected_root(lambda: f64, c: f64) -> (f64, bool) {
    if c == 0.0 {
        return (0.0, true);
    }
    let disc = lambda * lambda - 4.0 * c * c;
    if disc < 0.0 {
        return (lambda / (2.0 * c), false);
    }
    // product of the roots is 1, so the small one is 2c / (λ + √disc)
    let denom = lambda + disc.sqrt();
    if denom == 0.0 {
        return (0.0, false);
    }
    let x = 2.0 * c / denom;
    (x, x.abs() < 1.0)
}

pub fn fma1_projection(ctx: &Fma1Context, d: usize) -> Result<Fma1Estimate> {
    ctx.check_d(d)?;
    let (c0, c1) = ctx.projected(d);
    let mut theta = DMatrix::zeros(d, d);
    let mut flags = Vec::with_capacity(d);
    for i in 0..d {
        let (x, ok) = projected_root(c0[(i, i)], c1[(i, i)]);
        theta[(i, i)] = x;
        flags.push(!ok);
    }
    let residual_norm = fixed_point_residual(&theta, &c0, &c1);
    Ok(Fma1Estimate {
        embedded: ctx.embed(&theta),
        theta_hat: theta,
        method: Fma1Method::Projection,
        diagnostics: Diagnostics { iterations: 0, residual_norm, converged: true, no_admissible_root: flags },
    })
}

/// Fixed-point iteration `θ ← (C₁ + θ² C₁ᵀ) C₀^{-1}` from `θ = 0`.
///
/// Stops when successive iterates differ by less than `tol` in Frobenius
/// norm. If the iteration diverges or runs out of steps, the iterate with
/// the smallest equation residual is returned with `converged = false`.
pub fn fma1_iterative(ctx: &Fma1Context, d: usize, tol: f64, max_iter: usize) -> Result<Fma1Estimate> {
    ctx.check_d(d)?;
    let (c0, c1) = ctx.projected(d);
    let c0_inv = linalg::sym_inverse_ridged(&c0)?.ok_or(Error::SingularC0)?.0;
    let c1t = c1.transpose();
    let mut theta = DMatrix::zeros(d, d);
    let mut best = (theta.clone(), fixed_point_residual(&theta, &c0, &c1));
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let next = (&c1 + &theta * &theta * &c1t) * &c0_inv;
        if !linalg::all_finite(&next) || next.amax() > DIVERGENCE_BOUND {
            break;
        }
        let step = (&next - &theta).norm();
        theta = next;
        let res = fixed_point_residual(&theta, &c0, &c1);
        if res < best.1 {
            best = (theta.clone(), res);
        }
        if step < tol {
            converged = true;
            break;
        }
    }
    let (theta, residual_norm) = if converged {
        let r = fixed_point_residual(&theta, &c0, &c1);
        (theta, r)
    } else {
        best
    };
    Ok(Fma1Estimate {
        embedded: ctx.embed(&theta),
        theta_hat: theta,
        method: Fma1Method::Iterative,
        diagnostics: Diagnostics { iterations, residual_norm, converged, no_admissible_root: Vec::new() },
    })
}

/// `θ̂_{k,1}` from the Innovations Algorithm on the d leading scores.
pub fn fma1_innovations(ctx: &Fma1Context, d: usize, k: Option<usize>) -> Result<Fma1Estimate> {
    ctx.check_d(d)?;
    let model = fit_fma_prepared(&ctx.prep, d, 1, k)?;
    let theta = model.theta[0].clone();
    let (c0, c1) = ctx.projected(d);
    let residual_norm = fixed_point_residual(&theta, &c0, &c1);
    Ok(Fma1Estimate {
        embedded: model.embedded_theta(1),
        theta_hat: theta,
        method: Fma1Method::Innovations,
        diagnostics: Diagnostics { iterations: model.k_used, residual_norm, converged: true, no_admissible_root: Vec::new() },
    })
}

pub fn estimate(ctx: &Fma1Context, method: Fma1Method, d: usize) -> Result<Fma1Estimate> {
    match method {
        Fma1Method::Projection => fma1_projection(ctx, d),
        Fma1Method::Iterative => fma1_iterative(ctx, d, DEFAULT_TOL, DEFAULT_MAX_ITER),
        Fma1Method::Innovations => fma1_innovations(ctx, d, None),
    }
}

/// `‖θ - θ̂‖` in spectral norm.
pub fn estimation_error(true_theta: &DMatrix<f64>, embedded: &DMatrix<f64>) -> Result<f64> {
    if true_theta.shape() != embedded.shape() {
        return Err(Error::InvalidInput(format!(
            "operator shapes differ: {:?} vs {:?}",
            true_theta.shape(),
            embedded.shape()
        )));
    }
    Ok(linalg::spectral_norm_tol(&(true_theta - embedded), 1e-10))
}

/// Trace of the covariance of the residuals `e_j = x_j - θ e_{j-1}`,
/// `e_0 = x_0`, of a centered coefficient table under an FMA(1) operator.
pub fn innovation_trace(centered: &DMatrix<f64>, theta: &DMatrix<f64>) -> f64 {
    let n = centered.nrows();
    let mut prev = centered.row(0).transpose();
    let mut total = prev.norm_squared();
    for t in 1..n {
        let e = centered.row(t).transpose() - theta * &prev;
        total += e.norm_squared();
        prev = e;
    }
    total / n as f64
}
