//! Choice of the subspace dimension d and the FMA order q.
//!
//! * d: total variance explained, then portmanteau tests for independence of
//!   the left-out score directions, incrementing d until the test accepts.
//! * q for a given d: multivariate Ljung–Box on the scores, or AICC with the
//!   likelihood evaluated in innovations form.
//! * (d, q) jointly: the functional final prediction error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chisq;
use crate::error::{Error, Result};
use crate::fts::{self, Prepared};
use crate::innovations::{default_lags, fit_vma, innovations_algorithm, score_lag_covs};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    /// TVE fraction used to initialize d.
    pub tve_fraction: f64,
    /// Number of left-out directions tested for independence.
    pub tail_dirs: usize,
    /// Largest lag in both portmanteau statistics.
    pub h_bar: usize,
    pub alpha: f64,
    pub q_max: usize,
    pub d_max: usize,
    /// Lags for the Innovations Algorithm; `None` uses the default rule.
    pub k: Option<usize>,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self { tve_fraction: 0.8, tail_dirs: 3, h_bar: 5, alpha: 0.05, q_max: 5, d_max: 10, k: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// One step of a selection procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailRecord {
    pub test: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h_lo: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub criterion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl TrailRecord {
    fn new(test: &str) -> Self {
        Self {
            test: test.to_string(),
            d: None,
            q: None,
            h_lo: None,
            statistic: None,
            df: None,
            p_value: None,
            criterion: None,
            note: None,
        }
    }

    fn with_test(mut self, r: &TestResult) -> Self {
        self.statistic = Some(r.statistic);
        self.df = Some(r.df);
        self.p_value = Some(r.p_value);
        self
    }
}

/// Everything the selection procedures decided, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub d_tve: Option<usize>,
    pub d_ind: Option<usize>,
    pub q_lb: Option<usize>,
    pub q_aicc: Option<usize>,
    pub d_ffpe: Option<usize>,
    pub q_ffpe: Option<usize>,
    pub trail: Vec<TrailRecord>,
    pub params: SelectionParams,
}

fn centered_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for c in 0..x.ncols() {
        let m = x.column(c).sum() / n;
        out.column_mut(c).add_scalar_mut(-m);
    }
    out
}

/// Autocovariances `C_0..C_hmax` with divisor n.
fn autocov_n(x: &DMatrix<f64>, h_max: usize) -> Vec<DMatrix<f64>> {
    let n = x.nrows() as f64;
    (0..=h_max).map(|h| fts::lag_cov_rows_div(x, h, n)).collect()
}

/// Portmanteau test for independence of the scores on the left-out
/// directions `d*+1 ..= d*+p` (columns of `tail`).
///
/// `Q = n Σ_{h=1}^{h̄} Σ_{ℓ,ℓ'} f_h(ℓ,ℓ') b_h(ℓ,ℓ')` with `f_h`, `b_h` the
/// entries of `C_0^{-1} C_h` and `C_h C_0^{-1}`; χ² with `p² h̄` degrees of
/// freedom under independence.
pub fn independence_test(tail: &DMatrix<f64>, h_bar: usize) -> Result<TestResult> {
    let n = tail.nrows();
    let p = tail.ncols();
    if p == 0 || h_bar == 0 {
        return Err(Error::InvalidInput("independence test needs p >= 1 and h_bar >= 1".into()));
    }
    if n <= p * h_bar + 1 {
        return Err(Error::InvalidInput(format!("n = {n} too small for p = {p}, h_bar = {h_bar}")));
    }
    let x = centered_columns(tail);
    let covs = autocov_n(&x, h_bar);
    let c0_inv = linalg::sym_inverse_ridged(&covs[0])?.ok_or(Error::SingularTailCovariance)?.0;
    let mut sum = 0.0;
    for c in covs.iter().skip(1) {
        let f = &c0_inv * c;
        let b = c * &c0_inv;
        sum += f.component_mul(&b).sum();
    }
    let statistic = n as f64 * sum;
    let df = p * p * h_bar;
    Ok(TestResult { statistic, df, p_value: chisq::chi_sq_sf(df, statistic) })
}

/// Multivariate Ljung–Box statistic over lags `h_lo..=h_hi`:
/// `Q = n² Σ_h (n-h)^{-1} tr(C_hᵀ C_0^{-1} C_h C_0^{-1})`, χ² with
/// `d² (h_hi - h_lo + 1)` degrees of freedom.
pub fn ljung_box_stat(scores: &DMatrix<f64>, h_lo: usize, h_hi: usize) -> Result<TestResult> {
    let n = scores.nrows();
    let d = scores.ncols();
    if h_lo == 0 || h_hi < h_lo {
        return Err(Error::InvalidInput(format!("invalid lag range {h_lo}..={h_hi}")));
    }
    if d == 0 || n <= h_hi + 1 {
        return Err(Error::InvalidInput(format!("n = {n} too small for lag {h_hi}")));
    }
    let x = centered_columns(scores);
    let covs = autocov_n(&x, h_hi);
    let c0_inv = linalg::sym_inverse_ridged(&covs[0])?.ok_or(Error::SingularC0)?.0;
    let nf = n as f64;
    let mut statistic = 0.0;
    for (h, c) in covs.iter().enumerate().skip(h_lo) {
        let t = c.transpose() * &c0_inv * c * &c0_inv;
        statistic += t.trace() / (nf - h as f64);
    }
    statistic *= nf * nf;
    let df = d * d * (h_hi - h_lo + 1);
    Ok(TestResult { statistic, df, p_value: chisq::chi_sq_sf(df, statistic) })
}

/// Algorithm: TVE start, then increment d* while the left-out directions
/// fail the independence test. No multiplicity correction is applied.
pub fn select_d(prep: &Prepared, params: &SelectionParams) -> Result<(usize, Vec<TrailRecord>)> {
    let d_tve = fts::tve(&prep.eig, params.tve_fraction)?;
    let rank = prep.available_rank();
    let p = params.tail_dirs;
    let mut trail = Vec::new();
    let mut d = d_tve;
    let mut rec = TrailRecord::new("tve");
    rec.d = Some(d_tve);
    rec.criterion = Some(prep.eig.values.iter().take(d_tve).sum::<f64>() / prep.eig.total_trace);
    trail.push(rec);
    loop {
        if d + p > rank {
            return Err(Error::RankExhausted { d, p, rank });
        }
        let tail = prep.tail_scores(d, p)?;
        let r = independence_test(&tail, params.h_bar)?;
        let reject = r.p_value < params.alpha;
        let mut rec = TrailRecord::new("independence").with_test(&r);
        rec.d = Some(d);
        rec.note = Some(if reject { "reject" } else { "accept" }.to_string());
        trail.push(rec);
        if !reject {
            return Ok((d, trail));
        }
        if d >= params.d_max {
            let mut rec = TrailRecord::new("independence");
            rec.d = Some(d);
            rec.note = Some("stopped at d_max".to_string());
            trail.push(rec);
            return Ok((d, trail));
        }
        d += 1;
    }
}

/// Order by Ljung–Box: the largest starting lag whose statistic is
/// significant; 0 when none is.
pub fn select_q_lb(scores: &DMatrix<f64>, h_bar: usize, alpha: f64, q_max: usize) -> Result<(usize, Vec<TrailRecord>)> {
    let mut q = 0;
    let mut trail = Vec::new();
    for h_lo in 1..=q_max.min(h_bar) {
        let r = ljung_box_stat(scores, h_lo, h_bar)?;
        let mut rec = TrailRecord::new("ljung_box").with_test(&r);
        rec.d = Some(scores.ncols());
        rec.h_lo = Some(h_lo);
        trail.push(rec);
        if r.p_value < alpha {
            q = h_lo;
        }
    }
    Ok((q, trail))
}

/// Gaussian log-likelihood of the scores in innovations form, using the rows
/// of a k-lag Innovations Algorithm fit truncated to lags `i <= q`.
///
/// Observation t is predicted by `Σ_{i≤min(t,q)} θ̂_{m,i} ε̂_{t-i}` with
/// `m = min(t, k)` and prediction covariance `V̂_m` (`C_0` throughout when
/// `q = 0`).
pub fn innovations_loglik(scores: &DMatrix<f64>, q: usize, k: usize) -> Result<f64> {
    let n = scores.nrows();
    let d = scores.ncols();
    let k = k.max(q).max(1);
    let covs = score_lag_covs(scores, k)?;
    let fit = innovations_algorithm(&covs, k)?;
    let used = if q == 0 { 1 } else { k + 1 };
    let mut eig = Vec::with_capacity(used);
    let mut inv = Vec::with_capacity(used);
    for (m, v) in fit.v.iter().take(used).enumerate() {
        eig.push(linalg::sym_eigen(v)?);
        inv.push(linalg::sym_inverse_ridged(v)?.ok_or(Error::SingularV { index: m })?.0);
    }
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut resid: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut loglik = 0.0;
    for t in 0..n {
        let m = t.min(k);
        let mut pred = DVector::zeros(d);
        for i in 1..=m.min(q) {
            pred += fit.theta(m, i) * &resid[t - i];
        }
        let e = scores.row(t).transpose() - pred;
        let idx = if q == 0 { 0 } else { m };
        let quad = (e.transpose() * &inv[idx] * &e)[(0, 0)];
        loglik -= 0.5 * (d as f64 * ln2pi + linalg::sym_logdet(&eig[idx]) + quad);
        resid.push(e);
    }
    Ok(loglik)
}

/// `AICC(q) = -2 ln L + 2nd(qd²+1)/(nd - qd² - 2)` with `ln L` from
/// [`innovations_loglik`].
pub fn aicc(scores: &DMatrix<f64>, q: usize, k: usize) -> Result<f64> {
    let n = scores.nrows() as f64;
    let d = scores.ncols() as f64;
    let qf = q as f64;
    let denom = n * d - qf * d * d - 2.0;
    if denom <= 0.0 {
        return Err(Error::PenaltyUndefined(denom));
    }
    let loglik = innovations_loglik(scores, q, k)?;
    Ok(-2.0 * loglik + 2.0 * n * d * (qf * d * d + 1.0) / denom)
}

pub fn select_q_aicc(scores: &DMatrix<f64>, q_max: usize, k: Option<usize>) -> Result<(usize, Vec<TrailRecord>)> {
    let k = k.unwrap_or_else(|| default_lags(scores.nrows(), q_max)).max(q_max);
    let mut best: Option<(usize, f64)> = None;
    let mut trail = Vec::new();
    for q in 0..=q_max {
        let mut rec = TrailRecord::new("aicc");
        rec.d = Some(scores.ncols());
        rec.q = Some(q);
        match aicc(scores, q, k) {
            Ok(v) => {
                rec.criterion = Some(v);
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((q, v));
                }
            }
            Err(e) => rec.note = Some(e.to_string()),
        }
        trail.push(rec);
    }
    let (q, _) = best.ok_or_else(|| Error::InvalidInput("no AICC value could be computed".into()))?;
    Ok((q, trail))
}

/// `fFPE(d, q) = (n + qd)/n · tr(V) + Σ_{i>d} λ̂_i`.
///
/// `V` estimates the innovation covariance of the VMA(q) fitted to the first
/// d score directions: the one-step residuals `e_t` of the fit give
/// `V = Σ e_t e_tᵀ / (n - qd)`, each coordinate having been predicted from
/// qd coefficients.
pub fn ffpe(prep: &Prepared, d: usize, q: usize, k: usize) -> Result<f64> {
    let n = prep.n();
    if n <= q * d {
        return Err(Error::PenaltyUndefined((n as f64) - (q * d) as f64));
    }
    let scores = prep.scores(d)?;
    let model = fit_vma(&scores.scores, q, k)?;
    let out = model.filter(&scores.scores)?;
    let v_trace = out.residual_cov.trace() * n as f64 / (n - q * d) as f64;
    Ok(ffpe_penalty(n, d, q) * v_trace + prep.eigen_tail(d))
}

/// The factor `(n + qd)/n` multiplying `tr(V)`.
pub fn ffpe_penalty(n: usize, d: usize, q: usize) -> f64 {
    (n + q * d) as f64 / n as f64
}

/// Relative margin within which two fFPE values count as tied. With q = 0
/// the criterion is the total variance for every d, equal up to rounding.
pub const FFPE_TIE_TOL: f64 = 1e-10;

/// Grid search of fFPE over `1..=d_max` × `0..=q_max`. Cells that fail are
/// recorded and skipped; ties go to the lexicographically smaller (d, q).
pub fn select_dq_ffpe(
    prep: &Prepared,
    d_max: usize,
    q_max: usize,
    k: Option<usize>,
) -> Result<((usize, usize), Vec<TrailRecord>)> {
    let k = k.unwrap_or_else(|| default_lags(prep.n(), q_max)).max(q_max);
    let d_hi = d_max.min(prep.available_rank());
    let mut best: Option<((usize, usize), f64)> = None;
    let mut trail = Vec::new();
    for d in 1..=d_hi {
        for q in 0..=q_max {
            let mut rec = TrailRecord::new("ffpe");
            rec.d = Some(d);
            rec.q = Some(q);
            match ffpe(prep, d, q, k) {
                Ok(v) => {
                    rec.criterion = Some(v);
                    if best.is_none_or(|(_, b)| v < b - FFPE_TIE_TOL * b.abs()) {
                        best = Some(((d, q), v));
                    }
                }
                Err(e) => rec.note = Some(e.to_string()),
            }
            trail.push(rec);
        }
    }
    let (dq, _) = best.ok_or_else(|| Error::InvalidInput("no fFPE cell could be evaluated".into()))?;
    Ok((dq, trail))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Methods {
    pub ind: bool,
    pub lb: bool,
    pub aicc: bool,
    pub ffpe: bool,
}

impl Methods {
    pub const ALL: Methods = Methods { ind: true, lb: true, aicc: true, ffpe: true };
}

/// Runs the requested procedures. LB and AICC use `d_fixed` when given,
/// otherwise the dimension from the independence test.
pub fn select(prep: &Prepared, params: &SelectionParams, methods: Methods, d_fixed: Option<usize>) -> Result<SelectionReport> {
    let mut report = SelectionReport {
        d_tve: Some(fts::tve(&prep.eig, params.tve_fraction)?),
        d_ind: None,
        q_lb: None,
        q_aicc: None,
        d_ffpe: None,
        q_ffpe: None,
        trail: Vec::new(),
        params: *params,
    };
    let need_d = methods.lb || methods.aicc;
    if methods.ind || (need_d && d_fixed.is_none()) {
        let (d, trail) = select_d(prep, params)?;
        report.d_ind = Some(d);
        report.trail.extend(trail);
    }
    if need_d {
        let d = d_fixed.or(report.d_ind).expect("dimension available");
        let scores = prep.scores(d)?;
        if methods.lb {
            let (q, trail) = select_q_lb(&scores.scores, params.h_bar, params.alpha, params.q_max)?;
            report.q_lb = Some(q);
            report.trail.extend(trail);
        }
        if methods.aicc {
            let (q, trail) = select_q_aicc(&scores.scores, params.q_max, params.k)?;
            report.q_aicc = Some(q);
            report.trail.extend(trail);
        }
    }
    if methods.ffpe {
        let ((d, q), trail) = select_dq_ffpe(prep, params.d_max, params.q_max, params.k)?;
        report.d_ffpe = Some(d);
        report.q_ffpe = Some(q);
        report.trail.extend(trail);
    }
    Ok(report)
}
