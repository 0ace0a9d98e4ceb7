mod common;

use approx::assert_abs_diff_eq;
use fmats::basis::{self, BasisSpec, CurveGrid};
use fmats::fts::{self, FunctionalSample, LagCov, Prepared};
use fmats::simulate::SigmaProfile;
use nalgebra::{DMatrix, DVector};

fn midpoints(m: usize) -> Vec<f64> {
    (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
}

#[test]
fn basis_gram_matrix_is_identity() {
    let spec = BasisSpec::fourier(21).unwrap();
    let pts = midpoints(20_000);
    let b = spec.design(&pts);
    let gram = b.transpose() * &b / pts.len() as f64;
    assert!((gram - DMatrix::identity(21, 21)).abs().max() < 1e-6);
}

#[test]
fn polynomial_projection_matches_dense_least_squares() {
    let spec = BasisSpec::fourier(21).unwrap();
    let pts = CurveGrid::equispaced(201);
    let poly = |t: f64| 0.3 - 1.2 * t + 2.0 * t * t + 0.7 * t.powi(3) - 1.5 * t.powi(4);
    let values = DMatrix::from_fn(1, pts.len(), |_, j| poly(pts[j]));
    let grid = CurveGrid::new(pts.clone(), values.clone()).unwrap();
    let coeffs = basis::project_curves(&grid, &spec).unwrap();
    let back = basis::evaluate(&spec, coeffs.row(0).transpose().as_slice(), &pts).unwrap();
    let err = back.iter().zip(values.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // normal equations solved by Cholesky
    let b = spec.design(&pts);
    let y = DVector::from_iterator(pts.len(), values.iter().copied());
    let oracle = (b.transpose() * &b).cholesky().unwrap().solve(&(b.transpose() * &y));
    let fitted = &b * &oracle;
    let oracle_err = fitted.iter().zip(values.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    assert!(err <= oracle_err + 1e-10, "{err} vs {oracle_err}");
    assert!((coeffs.row(0).transpose() - oracle).abs().max() < 1e-8);
}

#[test]
fn projection_is_exact_for_basis_expansions_on_irregular_grids() {
    let spec = BasisSpec::fourier(9).unwrap();
    let c = common::gaussian(3, 9, 11);
    // 12 distinct, unevenly spaced points
    let pts: Vec<f64> = (0..12).map(|i| (i as f64 / 11.0).powf(1.7)).collect();
    let values = DMatrix::from_fn(3, pts.len(), |r, j| basis::evaluate(&spec, c.row(r).transpose().as_slice(), &[pts[j]]).unwrap()[0]);
    let grid = CurveGrid::new(pts, values).unwrap();
    let back = basis::project_curves(&grid, &spec).unwrap();
    assert!((back - c).abs().max() < 1e-10);
}

#[test]
fn inner_products_are_coefficient_dot_products() {
    let spec = BasisSpec::fourier(15).unwrap();
    let c = common::gaussian(2, 15, 5);
    let pts = midpoints(10_000);
    let f = basis::evaluate(&spec, c.row(0).transpose().as_slice(), &pts).unwrap();
    let g = basis::evaluate(&spec, c.row(1).transpose().as_slice(), &pts).unwrap();
    let l2: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / pts.len() as f64;
    assert_abs_diff_eq!(l2, c.row(0).dot(&c.row(1)), epsilon = 1e-5);
}

#[test]
fn lag0_covariance_of_iid_scores() {
    let n = 10_000;
    let sig2: [f64; 3] = [4.0, 1.0, 0.25];
    let mut x = common::gaussian(n, 3, 99);
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col *= sig2[j].sqrt();
    }
    let s = FunctionalSample::from_coeffs(x).unwrap().center();
    let c = fts::lag_cov(&s, 0).unwrap().op;
    let tol = |s: f64| 3.0 * s / (n as f64).sqrt();
    for i in 0..3 {
        assert!((c[(i, i)] - sig2[i]).abs() < tol(sig2[i]), "diag {i}: {}", c[(i, i)]);
        for j in 0..3 {
            if i != j {
                assert!(c[(i, j)].abs() < tol((sig2[i] * sig2[j]).sqrt()));
            }
        }
    }
}

#[test]
fn lag1_covariance_matches_population_identity() {
    let (sample, truth) = common::sim(100_000, 21, &[0.8], SigmaProfile::Fast, 2024);
    let c1 = fts::lag_cov(&sample.center(), 1).unwrap().op;
    let want = &truth.theta[0] * truth.innovation_cov();
    let err = (c1 - want).svd(false, false).singular_values.max();
    assert!(err < 0.02, "spectral error {err}");
}

#[test]
fn fpca_closed_forms_and_reconstruction() {
    let cov = LagCov { h: 0, op: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) };
    let eig = fts::fpca(&cov, 2).unwrap();
    assert_abs_diff_eq!(eig.values[0], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-12);
    let h = 0.5f64.sqrt();
    assert_abs_diff_eq!(eig.vectors[(0, 0)].abs(), h, epsilon = 1e-12);
    assert_abs_diff_eq!(eig.vectors[(1, 0)], eig.vectors[(0, 0)], epsilon = 1e-12);
    assert_abs_diff_eq!(eig.vectors[(1, 1)], -eig.vectors[(0, 1)], epsilon = 1e-12);

    let g = common::gaussian(40, 30, 3);
    let a = g.transpose() * &g / 40.0;
    let eig = fts::fpca(&LagCov { h: 0, op: a.clone() }, 30).unwrap();
    let recon = (0..30).fold(DMatrix::zeros(30, 30), |acc, i| {
        let v = eig.vectors.column(i);
        acc + eig.values[i] * &v * v.transpose()
    });
    assert!((recon - a).abs().max() < 1e-8);
}

#[test]
fn tve_examples_and_monotonicity() {
    let cov = LagCov { h: 0, op: DMatrix::from_diagonal(&DVector::from_vec(vec![8.0, 1.0, 1.0])) };
    let eig = fts::fpca(&cov, 3).unwrap();
    assert_eq!(fts::tve(&eig, 0.8).unwrap(), 1);
    assert_eq!(fts::tve(&eig, 0.81).unwrap(), 2);

    let prep = Prepared::new(&common::sim(300, 21, &[0.5], SigmaProfile::Slow, 1).0).unwrap();
    let mut last = 0;
    for p in (1..100).map(|i| i as f64 / 100.0) {
        let d = fts::tve(&prep.eig, p).unwrap();
        assert!(d >= last);
        last = d;
    }
}

#[test]
fn tve_on_ingested_curves_with_four_dominant_directions() {
    // Curves built from four strong and many weak Fourier components, so
    // that the first four directions explain just over 80% of the variance.
    let spec = BasisSpec::fourier(30).unwrap();
    let n = 400;
    let mut c = common::gaussian(n, 30, 8);
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col *= if j < 4 { 1.0 } else { 0.17 };
    }
    let pts = CurveGrid::equispaced(240);
    let values = DMatrix::from_fn(n, pts.len(), |r, j| basis::evaluate(&spec, c.row(r).transpose().as_slice(), &[pts[j]]).unwrap()[0]);
    let coeffs = basis::project_curves(&CurveGrid::new(pts, values).unwrap(), &spec).unwrap();
    let prep = Prepared::new(&FunctionalSample::from_coeffs(coeffs).unwrap()).unwrap();
    let share: f64 = prep.eig.values[..4].iter().sum::<f64>() / prep.eig.total_trace;
    assert!(share > 0.8 && share < 0.9, "share {share}");
    assert_eq!(fts::tve(&prep.eig, 0.8).unwrap(), 4);
}

#[test]
fn score_covariance_is_projected_covariance() {
    let prep = Prepared::new(&common::sim(500, 15, &[0.6], SigmaProfile::Slow, 4).0).unwrap();
    let d = 5;
    let s = prep.scores(d).unwrap().scores;
    let sc = s.transpose() * &s / prep.n() as f64;
    let e = prep.eig.leading(d);
    let want = e.transpose() * &prep.cov.op * &e;
    assert!((&sc - &want).abs().max() < 1e-8);
    for i in 0..d {
        assert_abs_diff_eq!(sc[(i, i)], prep.eig.values[i], epsilon = 1e-8);
    }
}

#[test]
fn projection_norm_equals_score_norm() {
    let prep = Prepared::new(&common::sim(50, 11, &[0.6], SigmaProfile::Fast, 6).0).unwrap();
    let d = 4;
    let e = prep.eig.leading(d);
    let s = prep.scores(d).unwrap().scores;
    for j in 0..prep.n() {
        let x = prep.sample.coeffs().row(j).transpose();
        let proj = &e * (e.transpose() * &x);
        assert_abs_diff_eq!(proj.norm_squared(), s.row(j).norm_squared(), epsilon = 1e-10);
    }
}

#[test]
fn second_moments_are_stationary() {
    let (sample, _) = common::sim(10_000, 11, &[0.8], SigmaProfile::Fast, 77);
    let x = sample.coeffs();
    let half = |r: std::ops::Range<usize>| {
        let s = FunctionalSample::from_coeffs(x.rows(r.start, r.len()).clone_owned()).unwrap().center();
        fts::lag_cov(&s, 0).unwrap().op
    };
    let a = half(0..5000);
    let b = half(5000..10_000);
    assert!((&a - &b).svd(false, false).singular_values.max() < 0.05);
}

#[test]
fn population_lag0_identity() {
    let (sample, truth) = common::sim(100_000, 11, &[0.8], SigmaProfile::Slow, 31);
    let c0 = fts::lag_cov(&sample.center(), 0).unwrap().op;
    let th = &truth.theta[0];
    let ce = truth.innovation_cov();
    let want = &ce + th * &ce * th.transpose();
    assert!((c0 - want).svd(false, false).singular_values.max() < 0.02);
}
