#![allow(dead_code)]

use fmats::basis::{self, BasisSpec};
use fmats::fts::{self, FunctionalSample, Prepared};
use fmats::innovations::{self, fit_fma_prepared};
use fmats::io::{ModelDocument, Provenance};
use fmats::linalg;
use fmats::simulate::{self, OperatorScale, SigmaProfile, SimConfig};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Check = Result<(), String>;

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

pub fn sim(n: usize, dim: usize, kappas: &[f64], profile: SigmaProfile, seed: u64) -> (FunctionalSample, simulate::TrueModel) {
    let config = SimConfig {
        dim,
        q: kappas.len(),
        kappas: kappas.to_vec(),
        sigma_profile: profile,
        n,
        seed,
        operator_scale: OperatorScale::Product,
    };
    simulate::simulate_fma(&config).expect("simulation")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Lag-0 covariance of a random sample is symmetric and positive semidefinite.
pub fn covariance_psd_symmetric(n: usize, dim: usize, seed: u64) -> Check {
    let sample = FunctionalSample::from_coeffs(gaussian(n, dim, seed)).unwrap().center();
    let c = fts::lag_cov(&sample, 0).map_err(|e| e.to_string())?.op;
    let asym = linalg::max_asymmetry(&c);
    ensure(asym <= 1e-12 * linalg::max_abs(&c).max(1.0), || format!("asymmetry {asym:e}"))?;
    let min = c.clone().symmetric_eigenvalues().min();
    ensure(min >= -1e-10 * c.trace().max(1.0), || format!("min eigenvalue {min:e}"))
}

/// FPCA eigenvectors are orthonormal and the eigenvalues sum to the trace.
pub fn eigensystem_orthonormal_trace(n: usize, dim: usize, seed: u64) -> Check {
    let mut x = gaussian(n, dim, seed);
    // uneven column scales give a spread spectrum
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col *= 1.0 / (1.0 + j as f64);
    }
    let prep = Prepared::new(&FunctionalSample::from_coeffs(x).unwrap()).map_err(|e| e.to_string())?;
    let v = &prep.eig.vectors;
    let gram = v.transpose() * v;
    let dev = (gram - DMatrix::identity(dim, dim)).abs().max();
    ensure(dev <= 1e-8, || format!("orthonormality deviation {dev:e}"))?;
    let sum: f64 = prep.eig.values.iter().sum();
    let tr = prep.cov.op.trace();
    ensure((sum - tr).abs() <= 1e-8 * tr.max(1.0), || format!("eigenvalue sum {sum} vs trace {tr}"))?;
    ensure(prep.eig.values.windows(2).all(|w| w[0] >= w[1]), || "eigenvalues not ordered".into())
}

/// Innovation covariances from sample lag covariances are symmetric with
/// non-increasing trace.
pub fn innovation_traces_monotone(n: usize, d: usize, k: usize, seed: u64) -> Check {
    let (sample, _) = sim(n, 11, &[0.7], SigmaProfile::Slow, seed);
    let prep = Prepared::new(&sample).map_err(|e| e.to_string())?;
    let scores = prep.scores(d).map_err(|e| e.to_string())?;
    let covs = innovations::score_lag_covs(&scores.scores, k).map_err(|e| e.to_string())?;
    let fit = innovations::innovations_algorithm(&covs, k).map_err(|e| e.to_string())?;
    let scale = fit.v[0].trace();
    for (m, v) in fit.v.iter().enumerate() {
        let asym = linalg::max_asymmetry(v);
        ensure(asym <= 1e-8 * scale, || format!("V_{m} asymmetry {asym:e}"))?;
        let min = v.clone().symmetric_eigenvalues().min();
        ensure(min >= -1e-8 * scale, || format!("V_{m} min eigenvalue {min:e}"))?;
    }
    for m in 1..fit.v.len() {
        let (a, b) = (fit.v[m - 1].trace(), fit.v[m].trace());
        ensure(b <= a + 1e-8 * scale, || format!("tr V_{m} = {b} > tr V_{} = {a}", m - 1))?;
    }
    Ok(())
}

/// Random operators have unit spectral norm.
pub fn random_operator_unit_norm(dim: usize, seed: u64, slow: bool) -> Check {
    let profile = if slow { SigmaProfile::Slow } else { SigmaProfile::Fast };
    let mut rng = simulate::replication_rng(seed, 0);
    let op = simulate::random_operator(&profile.sigmas(dim), OperatorScale::Product, &mut rng).map_err(|e| e.to_string())?;
    let norm = op.clone().svd(false, false).singular_values.max();
    ensure((norm - 1.0).abs() <= 1e-10, || format!("spectral norm {norm}"))
}

/// The L² norm of an expansion equals the Euclidean norm of its coefficients.
pub fn parseval(dim: usize, seed: u64) -> Check {
    let spec = BasisSpec::fourier(dim).unwrap();
    let c: Vec<f64> = gaussian(1, dim, seed).iter().copied().collect();
    let m = 10_000;
    let pts: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
    let vals = basis::evaluate(&spec, &c, &pts).map_err(|e| e.to_string())?;
    let l2: f64 = vals.iter().map(|v| v * v).sum::<f64>() / m as f64;
    let e2: f64 = c.iter().map(|v| v * v).sum();
    ensure((l2.sqrt() - e2.sqrt()).abs() <= 1e-5, || format!("L2 {} vs coefficients {}", l2.sqrt(), e2.sqrt()))
}

/// Saving and loading a fitted model reproduces every numeric field.
pub fn model_round_trip(n: usize, d: usize, q: usize, seed: u64) -> Check {
    let (sample, _) = sim(n, 9, &vec![0.5; q.max(1)], SigmaProfile::Fast, seed);
    let prep = Prepared::new(&sample).map_err(|e| e.to_string())?;
    let model = fit_fma_prepared(&prep, d, q, None).map_err(|e| e.to_string())?;
    let doc = ModelDocument::from_model(&model, Provenance::capture(Some(seed)));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.json");
    doc.save(&path).map_err(|e| e.to_string())?;
    let back = ModelDocument::load(&path).map_err(|e| e.to_string())?;
    let model2 = back.to_model().map_err(|e| e.to_string())?;
    let close = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.shape() == b.shape() && (a - b).abs().max() <= 1e-12;
    ensure(back == doc, || "document changed on round trip".into())?;
    ensure(close(&model.eigvecs, &model2.eigvecs), || "eigvecs differ".into())?;
    ensure(close(&model.v, &model2.v), || "V differs".into())?;
    ensure(model.theta.iter().zip(&model2.theta).all(|(a, b)| close(a, b)), || "theta differs".into())?;
    ensure((&model.mean - &model2.mean).abs().max() <= 1e-12, || "mean differs".into())
}

/// Same seed, same data and same fit.
pub fn seeded_determinism(n: usize, seed: u64) -> Check {
    let (a, ta) = sim(n, 9, &[0.8], SigmaProfile::Fast, seed);
    let (b, tb) = sim(n, 9, &[0.8], SigmaProfile::Fast, seed);
    ensure(a.coeffs() == b.coeffs(), || "coefficients differ".into())?;
    ensure(ta.theta == tb.theta, || "true operators differ".into())?;
    let fa = fmats::fit_fma(&a, 2, 1, None).map_err(|e| e.to_string())?;
    let fb = fmats::fit_fma(&b, 2, 1, None).map_err(|e| e.to_string())?;
    ensure(fa.theta == fb.theta && fa.v == fb.v, || "fits differ".into())?;
    let (c, _) = sim(n, 9, &[0.8], SigmaProfile::Fast, seed + 1);
    ensure(a.coeffs() != c.coeffs(), || "different seeds gave equal data".into())
}
