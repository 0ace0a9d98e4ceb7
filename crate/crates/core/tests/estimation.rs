mod common;

use approx::assert_abs_diff_eq;
use fmats::baselines::{self, Fma1Context, Fma1Method};
use fmats::basis::{BasisSpec, CurveGrid};
use fmats::fts::{FunctionalSample, Prepared};
use fmats::innovations::{self, fit_fma_prepared, predict_one_step, FmaModel};
use fmats::io::{self, ModelDocument, Provenance};
use fmats::simulate::{self, SigmaProfile, TrueModel};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn opnorm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scalar MA(1) series `x_t = e_t + ϑ e_{t-1}` as an n×1 table.
fn scalar_ma1(n: usize, vartheta: f64, seed: u64) -> DMatrix<f64> {
    let e = common::gaussian(n + 1, 1, seed);
    DMatrix::from_fn(n, 1, |t, _| e[(t + 1, 0)] + vartheta * e[(t, 0)])
}

#[test]
fn population_ma1_has_no_higher_lag_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sigma = SigmaProfile::Slow.sigmas(6);
    let th = simulate::random_operator(&sigma, Default::default(), &mut rng).unwrap() * 0.7;
    let truth = TrueModel { theta: vec![th], theta_unit: vec![], sigma, companion_radius: 0.0, invertible: true };
    let mut covs = vec![truth.lag_cov(0), truth.lag_cov(1)];
    covs.extend((2..=8).map(|_| DMatrix::zeros(6, 6)));
    let fit = innovations::innovations_algorithm(&covs, 8).unwrap();
    for m in 2..=8 {
        for i in 2..=m {
            assert!(fit.theta(m, i).abs().max() < 1e-10, "theta({m},{i})");
        }
    }
    // and the lag-1 coefficients approach the truth
    assert!(opnorm(&(fit.theta(8, 1) - &truth.theta[0])) < 0.05);
}

#[test]
fn white_noise_inverse_filter_is_small() {
    let x = common::gaussian(5000, 3, 12);
    let s = FunctionalSample::from_coeffs(x).unwrap().center();
    let f = innovations::yule_walker(s.coeffs(), 3, 0.0).unwrap();
    for b in &f.beta {
        assert!(opnorm(b) < 0.1);
    }
}

#[test]
fn scalar_ma1_inverse_filter() {
    let v = 0.5;
    let x = scalar_ma1(40_000, v, 3);
    let s = FunctionalSample::from_coeffs(x).unwrap().center();
    let f = innovations::yule_walker(s.coeffs(), 6, 0.0).unwrap();
    for (i, b) in f.beta.iter().enumerate() {
        let want = -(-v).powi(i as i32 + 1);
        assert!((b[(0, 0)] - want).abs() < 0.03, "beta {}: {} vs {want}", i + 1, b[(0, 0)]);
    }
}

#[test]
fn first_order_filter_is_lag_one_regression() {
    let (sample, _) = common::sim(2000, 7, &[0.6], SigmaProfile::Fast, 5);
    let prep = Prepared::new(&sample).unwrap();
    let x = prep.scores(3).unwrap().scores;
    let f = innovations::yule_walker(&x, 1, 0.0).unwrap();
    let n = x.nrows();
    let lead = x.rows(1, n - 1);
    let lagged = x.rows(0, n - 1);
    // least squares of x_{t+1} on x_t
    let ls = (lead.transpose() * lagged) * (lagged.transpose() * lagged).try_inverse().unwrap();
    assert!((&f.beta[0] - ls).abs().max() < 0.02);
}

#[test]
fn model2_fit_concentrates_on_third_lag() {
    let (sample, _) = common::sim(1000, 21, &[0.0, 0.0, 0.8], SigmaProfile::Fast, 8);
    let model = fmats::fit_fma(&sample, 3, 3, None).unwrap();
    let norms: Vec<f64> = model.theta.iter().map(opnorm).collect();
    assert!(norms[2] > 0.4, "{norms:?}");
    assert!(norms[0] < 0.5 * norms[2] && norms[1] < 0.5 * norms[2], "{norms:?}");
}

#[test]
fn white_noise_fits_shrink() {
    let norms: Vec<f64> = (0..50)
        .map(|r| {
            let x = common::gaussian(2000, 9, 1000 + r);
            let model = fmats::fit_fma(&FunctionalSample::from_coeffs(x).unwrap(), 3, 1, None).unwrap();
            opnorm(&model.theta[0])
        })
        .collect();
    assert!(median(norms.clone()) < 0.15, "median {}", median(norms));
}

#[test]
fn higher_lag_coefficients_vanish_with_n() {
    let tail = |n: usize| {
        let v: Vec<f64> = (0..40)
            .map(|r| {
                let (sample, _) = common::sim(n, 11, &[0.8], SigmaProfile::Fast, 500 + r);
                let prep = Prepared::new(&sample).unwrap();
                let s = prep.scores(2).unwrap().scores;
                let covs = innovations::score_lag_covs(&s, 4).unwrap();
                let fit = innovations::innovations_algorithm(&covs, 4).unwrap();
                opnorm(fit.theta(4, 2))
            })
            .collect();
        median(v)
    };
    let (small, large) = (tail(100), tail(1000));
    assert!(large < 0.5 * small, "n=100 {small}, n=1000 {large}");
}

#[test]
fn forecast_error_matches_innovation_variance_plus_tail() {
    let (n, d, reps) = (400, 3, 200);
    let mut sq = 0.0;
    let mut expected = 0.0;
    for r in 0..reps {
        let (sample, _) = common::sim(n + 1, 11, &[0.6], SigmaProfile::Slow, 9000 + r);
        let x = sample.coeffs();
        let fit_on = FunctionalSample::from_coeffs(x.rows(0, n).clone_owned()).unwrap();
        let prep = Prepared::new(&fit_on).unwrap();
        let model = fit_fma_prepared(&prep, d, 1, None).unwrap();
        let pred = predict_one_step(&model, &x.rows(0, n).clone_owned()).unwrap();
        sq += (x.row(n).transpose() - pred.coeffs).norm_squared();
        expected += model.v.trace() + prep.eigen_tail(d);
    }
    let ratio = sq / expected;
    assert!((ratio - 1.0).abs() < 0.15, "observed/expected = {ratio}");
}

#[test]
fn triangular_predictions_use_growing_history() {
    let (sample, _) = common::sim(300, 9, &[0.7], SigmaProfile::Fast, 21);
    let prep = Prepared::new(&sample).unwrap();
    let s = prep.scores(2).unwrap().scores;
    let covs = innovations::score_lag_covs(&s, 3).unwrap();
    let fit = innovations::innovations_algorithm(&covs, 3).unwrap();
    let pred = fit.predict(&s).unwrap();
    assert_eq!(pred.row(0).norm(), 0.0);
    let want1 = fit.theta(1, 1) * s.row(0).transpose();
    assert!((pred.row(1).transpose() - &want1).abs().max() < 1e-12);
    let e1 = s.row(1).transpose() - want1;
    let want2 = fit.theta(2, 1) * e1 + fit.theta(2, 2) * s.row(0).transpose();
    assert!((pred.row(2).transpose() - want2).abs().max() < 1e-12);
}

/// One-direction context whose moments are overwritten with `c0` and `c1`.
fn exact_scalar_context(c0: f64, c1: f64) -> Fma1Context {
    let x = common::gaussian(10, 1, 0);
    let mut ctx = Fma1Context::new(&FunctionalSample::from_coeffs(x).unwrap()).unwrap();
    ctx.prep.cov.op.fill(c0);
    ctx.prep.eig.values = vec![c0];
    ctx.prep.eig.vectors.fill(1.0);
    ctx.c1.fill(c1);
    ctx
}

#[test]
fn scalar_baselines_recover_the_textbook_root() {
    // scalar commuting case λ = 1.25, c = 0.5
    let (x, ok) = baselines::projected_root(1.25, 0.5);
    assert!(ok);
    assert_abs_diff_eq!(x, 0.5, epsilon = 1e-15);
    assert_eq!(baselines::projected_root(1.0, 0.0), (0.0, true));

    // Both estimators on exact population moments.
    let ctx = exact_scalar_context(1.25, 0.5);
    let it = baselines::fma1_iterative(&ctx, 1, 1e-8, 500).unwrap();
    assert!(it.diagnostics.converged);
    assert_abs_diff_eq!(it.theta_hat[(0, 0)], 0.5, epsilon = 1e-8);
    let pr = baselines::fma1_projection(&ctx, 1).unwrap();
    assert_abs_diff_eq!(pr.theta_hat[(0, 0)], 0.5, epsilon = 1e-15);

    // The same scalar problem through the estimator on a 1-D sample whose
    // empirical moments are close to the population ones.
    let x = scalar_ma1(200_000, 0.5, 44);
    let ctx = Fma1Context::new(&FunctionalSample::from_coeffs(x).unwrap()).unwrap();
    let it = baselines::fma1_iterative(&ctx, 1, 1e-8, 500).unwrap();
    let pr = baselines::fma1_projection(&ctx, 1).unwrap();
    assert!(it.diagnostics.converged);
    let (c0, c1) = ctx.projected(1);
    let (root, _) = baselines::projected_root(c0[(0, 0)], c1[(0, 0)]);
    assert_abs_diff_eq!(it.theta_hat[(0, 0)], root, epsilon = 1e-6);
    assert_abs_diff_eq!(pr.theta_hat[(0, 0)], 0.5, epsilon = 0.02);
}

#[test]
fn zero_lag_one_covariance_gives_zero_operator_after_one_step() {
    let ctx = exact_scalar_context(2.0, 0.0);
    let it = baselines::fma1_iterative(&ctx, 1, 1e-8, 500).unwrap();
    assert!(it.diagnostics.converged);
    assert_eq!(it.diagnostics.iterations, 1);
    assert_eq!(it.theta_hat[(0, 0)], 0.0);
    let pr = baselines::fma1_projection(&ctx, 1).unwrap();
    assert_eq!(pr.theta_hat[(0, 0)], 0.0);
}

#[test]
fn converged_iterations_satisfy_the_quadratic() {
    for seed in 0..10 {
        let (sample, _) = common::sim(500, 11, &[0.5], SigmaProfile::Fast, 300 + seed);
        let ctx = Fma1Context::new(&sample).unwrap();
        for d in 1..=3 {
            let est = baselines::fma1_iterative(&ctx, d, 1e-8, 500).unwrap();
            if est.diagnostics.converged {
                let (c0, _) = ctx.projected(d);
                assert!(est.diagnostics.residual_norm <= 10.0 * 1e-8 * opnorm(&c0), "seed {seed} d {d}");
            }
        }
    }
}

#[test]
fn commuting_truth_makes_projection_and_iteration_agree() {
    // θ diagonal in the basis and C_ε diagonal: they commute.
    let dim = 7;
    let sigma = SigmaProfile::Fast.sigmas(dim);
    let diag: Vec<f64> = (0..dim).map(|i| if i < 2 { 0.6 - 0.2 * i as f64 } else { 0.0 }).collect();
    let th = DMatrix::from_diagonal(&DVector::from_vec(diag));
    let truth = TrueModel { theta: vec![th.clone()], theta_unit: vec![th], sigma, companion_radius: 0.6, invertible: true };
    let err_at = |n: usize, seed: u64| {
        let mut rng = simulate::replication_rng(seed, 0);
        let sample = simulate::simulate_from_model(&truth, n, &mut rng).unwrap();
        let ctx = Fma1Context::new(&sample).unwrap();
        let p = baselines::fma1_projection(&ctx, 2).unwrap();
        let i = baselines::fma1_iterative(&ctx, 2, 1e-8, 500).unwrap();
        (
            baselines::estimation_error(&truth.theta[0], &p.embedded).unwrap(),
            baselines::estimation_error(&truth.theta[0], &i.embedded).unwrap(),
            opnorm(&(p.embedded - i.embedded)),
        )
    };
    let small: Vec<_> = (0..20).map(|r| err_at(500, r)).collect();
    let large: Vec<_> = (0..20).map(|r| err_at(20_000, 100 + r)).collect();
    let mean = |v: &[(f64, f64, f64)], f: fn(&(f64, f64, f64)) -> f64| v.iter().map(f).sum::<f64>() / v.len() as f64;
    assert!(mean(&large, |t| t.2) < 0.05, "estimators disagree");
    assert!(mean(&large, |t| t.0) < mean(&small, |t| t.0));
    assert!(mean(&large, |t| t.1) < mean(&small, |t| t.1));
    assert!(mean(&large, |t| t.0) < 0.05 && mean(&large, |t| t.1) < 0.05);
}

#[test]
fn estimation_error_is_a_norm() {
    for seed in 0..30 {
        let a = common::gaussian(8, 8, 3 * seed);
        let b = common::gaussian(8, 8, 3 * seed + 1);
        let zero = DMatrix::zeros(8, 8);
        let na = baselines::estimation_error(&a, &zero).unwrap();
        let nb = baselines::estimation_error(&b, &zero).unwrap();
        let nab = baselines::estimation_error(&a, &(-&b)).unwrap();
        assert!(nab <= na + nb + 1e-10);
        let s = -2.5;
        let nsa = baselines::estimation_error(&(&a * s), &zero).unwrap();
        assert!((nsa - s.abs() * na).abs() <= 1e-10 * na.max(1.0));
    }
    let (_, truth) = common::sim(10, 21, &[0.8], SigmaProfile::Fast, 3);
    let e = baselines::estimation_error(&truth.theta[0], &DMatrix::zeros(21, 21)).unwrap();
    assert_abs_diff_eq!(e, 0.8, epsilon = 1e-9);
    assert_eq!(baselines::estimation_error(&truth.theta[0], &truth.theta[0]).unwrap(), 0.0);
}

#[test]
fn method_labels_round_trip() {
    for m in Fma1Method::ALL {
        assert_eq!(m.label().parse::<Fma1Method>().unwrap(), m);
    }
    assert!("nope".parse::<Fma1Method>().is_err());
}

fn hand_model(dim: usize, eigvecs: DMatrix<f64>, theta: DMatrix<f64>) -> FmaModel {
    let d = eigvecs.ncols();
    FmaModel {
        basis: BasisSpec::fourier(dim).unwrap(),
        eigvecs,
        eigvals_all: vec![1.0; dim],
        d,
        q: 1,
        k_used: 1,
        theta: vec![theta],
        v: DMatrix::identity(d, d),
        mean: DVector::zeros(dim),
    }
}

#[test]
fn kernel_closed_forms() {
    let mut e = DMatrix::zeros(5, 1);
    e[(0, 0)] = 1.0;
    let (_, k) = io::model_kernel(&hand_model(5, e.clone(), DMatrix::from_element(1, 1, 1.0)), 1, 9).unwrap();
    assert!(k.iter().all(|v| (v - 1.0).abs() < 1e-12));
    let (_, k) = io::model_kernel(&hand_model(5, e, DMatrix::zeros(1, 1)), 1, 9).unwrap();
    assert!(k.iter().all(|v| *v == 0.0));
}

#[test]
fn symmetric_operator_gives_symmetric_kernel() {
    let g = common::gaussian(4, 4, 2);
    let sym = &g + g.transpose();
    let eig = DMatrix::<f64>::identity(7, 7).columns(0, 4).clone_owned();
    let (points, k) = io::model_kernel(&hand_model(7, eig, sym), 1, 21).unwrap();
    assert_eq!(points, CurveGrid::equispaced(21));
    assert!((&k - k.transpose()).abs().max() < 1e-10);
}

#[test]
fn kernel_command_output_matches_library() {
    let (sample, _) = common::sim(200, 9, &[0.7], SigmaProfile::Fast, 12);
    let model = fmats::fit_fma(&sample, 2, 1, None).unwrap();
    let (pts, k) = io::model_kernel(&model, 1, 5).unwrap();
    let mut buf = Vec::new();
    io::write_kernel(&pts, &k, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert_eq!(*v, k[(r, c)]);
        }
    }
    let doc = ModelDocument::from_model(&model, Provenance::capture(None));
    assert_eq!(doc.to_model().unwrap().theta, model.theta);
}
