//! Fourier basis on [0, 1] and conversion between grid samples and
//! coefficient vectors.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of basis functions used when ingesting curve data.
pub const DEFAULT_DIM: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fourier,
}

/// The first `dim` functions of the Fourier system
/// `1, √2 sin(2πt), √2 cos(2πt), √2 sin(4πt), ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub dim: usize,
}

impl BasisSpec {
    pub fn fourier(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("basis dimension must be at least 1".into()));
        }
        Ok(Self { kind: BasisKind::Fourier, dim })
    }

    /// Value of basis function `index` (0-based) at `t`.
    pub fn value(&self, index: usize, t: f64) -> f64 {
        if index == 0 {
            return 1.0;
        }
        let m = ((index + 1) / 2) as f64;
        let arg = 2.0 * PI * m * t;
        if index % 2 == 1 {
            SQRT_2 * arg.sin()
        } else {
            SQRT_2 * arg.cos()
        }
    }

    /// All `dim` basis values at `t`.
    pub fn values_at(&self, t: f64) -> Vec<f64> {
        (0..self.dim).map(|i| self.value(i, t)).collect()
    }

    /// Design matrix with one row per point and one column per basis function.
    pub fn design(&self, points: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(points.len(), self.dim, |r, c| self.value(c, points[r]))
    }
}

/// Curves observed on a common grid of points in [0, 1].
#[derive(Debug, Clone)]
pub struct CurveGrid {
    points: Vec<f64>,
    /// n×m, one curve per row.
    values: DMatrix<f64>,
}

impl CurveGrid {
    pub fn new(points: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("curve grid needs at least 2 points".into()));
        }
        if values.ncols() != points.len() {
            return Err(Error::InvalidInput(format!(
                "curve table has {} columns but the grid has {} points",
                values.ncols(),
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("curve grid"));
        }
        if let Some(&t) = points.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::PointOutOfDomain(t));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid points must be strictly increasing".into()));
        }
        Ok(Self { points, values })
    }

    /// Equispaced grid of `m` points including both endpoints.
    pub fn equispaced(m: usize) -> Vec<f64> {
        if m == 1 {
            return vec![0.0];
        }
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }
}

/// Least-squares coefficients (n×D) of every curve in `grid`.
///
/// Each row minimizes the squared residual between the samples and the basis
/// expansion evaluated on the grid. Solved through an SVD of the design
/// matrix, so grids on which some basis columns coincide still give the
/// minimum-norm solution.
pub fn project_curves(grid: &CurveGrid, spec: &BasisSpec) -> Result<DMatrix<f64>> {
    let m = grid.points.len();
    if m < spec.dim {
        return Err(Error::GridTooCoarse { points: m, dim: spec.dim });
    }
    let design = spec.design(&grid.points);
    let svd = design.svd(true, true);
    let rhs = grid.values.transpose();
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    let coeffs = svd.solve(&rhs, eps).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(coeffs.transpose())
}

/// Evaluates the expansion `Σ coeffs_i f_i(t)` at each point.
pub fn evaluate(spec: &BasisSpec, coeffs: &[f64], points: &[f64]) -> Result<Vec<f64>> {
    if coeffs.len() != spec.dim {
        return Err(Error::InvalidInput(format!(
            "expected {} coefficients, got {}",
            spec.dim,
            coeffs.len()
        )));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteInput("coefficients"));
    }
    points
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::PointOutOfDomain(t));
            }
            Ok(coeffs.iter().enumerate().map(|(i, c)| c * spec.value(i, t)).sum())
        })
        .collect()
}

/// Kernel `K(s, t) = Σ_{b,b'} A_{bb'} f_b(s) f_{b'}(t)` of the operator whose
/// matrix in this basis is `op`, on the grid `points × points`. Row r holds
/// `K(points[r], ·)`.
pub fn operator_kernel(spec: &BasisSpec, op: &DMatrix<f64>, points: &[f64]) -> Result<DMatrix<f64>> {
    if op.nrows() != spec.dim || op.ncols() != spec.dim {
        return Err(Error::InvalidInput(format!(
            "operator is {}x{} but the basis has {} functions",
            op.nrows(),
            op.ncols(),
            spec.dim
        )));
    }
    if let Some(&t) = points.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::PointOutOfDomain(t));
    }
    let f = spec.design(points);
    Ok(&f * op * f.transpose())
}
