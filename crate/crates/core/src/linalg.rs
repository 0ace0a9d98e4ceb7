//! Dense symmetric linear algebra used throughout the crate.
//!
//! The eigensolver is a cyclic Jacobi iteration. Matrices here are small
//! (basis dimension D up to a few dozen, block systems up to a few hundred),
//! so robustness and exact symmetry of the output matter more than speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition number at or above which a symmetric system counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Maximum number of Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, sorted by non-increasing eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Iterates until the off-diagonal Frobenius norm drops below
/// `1e-12 * scale`, where `scale` is the larger of the trace and the
/// Frobenius norm (the two coincide up to a constant for PSD input).
/// Each eigenvector is signed so that its largest-magnitude coordinate is
/// positive; eigenvalue ties keep the order in which the sweep produced them
/// after a stable sort.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(Error::NonFiniteInput("matrix passed to eigensolver"));
    }
    let mut m = symmetrize(a);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.trace().abs().max(m.norm());
    let tol = 1e-12 * scale;

    let off_norm = |m: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while scale > 0.0 && off_norm(&m) >= tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::ConvergenceFailure(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut column = v.column(src).clone_owned();
        fix_sign(&mut column);
        vectors.set_column(col, &column);
    }
    Ok(SymEigen { values, vectors })
}

/// Flips `v` so its largest-magnitude coordinate (first on ties) is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Spectral norm by power iteration on `aᵀa`.
///
/// Stops when the Rayleigh quotient changes by less than `rel_tol` relative
/// to its value. The start vector is a fixed deterministic pattern.
pub fn spectral_norm_tol(a: &DMatrix<f64>, rel_tol: f64) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    let b = a / scale;
    let gram = b.transpose() * &b;
    let n = gram.nrows();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..50_000 {
        let y = &gram * &x;
        let next = x.dot(&y);
        let ny = y.norm();
        if ny == 0.0 {
            break;
        }
        x = y / ny;
        if (next - lambda).abs() <= rel_tol * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient of the final iterate is the most accurate estimate.
    let lambda = x.dot(&(&gram * &x)).max(lambda);
    scale * lambda.max(0.0).sqrt()
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    spectral_norm_tol(a, 1e-13)
}

/// Inverse of a symmetric matrix with the ridge fallback.
///
/// If the condition number is at least [`SINGULAR_CONDITION`], `eps * I` with
/// `eps = 1e-10 * trace / dim` is added and the check repeated once. Returns
/// the inverse and whether the ridge was used, or `None` when the matrix is
/// still singular.
pub fn sym_inverse_ridged(a: &DMatrix<f64>) -> Result<Option<(DMatrix<f64>, bool)>> {
    let n = a.nrows();
    let eig = sym_eigen(a)?;
    if let Some(inv) = inverse_from_eigen(&eig) {
        return Ok(Some((inv, false)));
    }
    let trace = a.trace();
    if !(trace > 0.0) {
        return Ok(None);
    }
    let eps = 1e-10 * trace / n as f64;
    let ridged = symmetrize(a) + DMatrix::<f64>::identity(n, n) * eps;
    let eig = sym_eigen(&ridged)?;
    Ok(inverse_from_eigen(&eig).map(|inv| (inv, true)))
}

fn inverse_from_eigen(eig: &SymEigen) -> Option<DMatrix<f64>> {
    let n = eig.values.len();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let max = eig.values[0];
    let min = eig.values[n - 1];
    if !(min > 0.0) || max / min >= SINGULAR_CONDITION {
        return None;
    }
    let inv_vals = DVector::from_iterator(n, eig.values.iter().map(|v| 1.0 / v));
    let scaled = &eig.vectors * DMatrix::from_diagonal(&inv_vals);
    Some(symmetrize(&(scaled * eig.vectors.transpose())))
}

/// Condition number `max/min` of a symmetric matrix (infinite if not PD).
pub fn sym_condition(a: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigen(a)?;
    let n = eig.values.len();
    if n == 0 {
        return Ok(1.0);
    }
    let min = eig.values[n - 1];
    if min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(eig.values[0] / min)
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn sym_logdet(eig: &SymEigen) -> f64 {
    eig.values.iter().map(|v| v.ln()).sum()
}
