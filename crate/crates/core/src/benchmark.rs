//! Replicated simulation studies: estimation error of the FMA(1) estimators
//! over a grid of subspace dimensions, and frequencies of the selected
//! dimension and order.
//!
//! Replications run on a rayon pool (size from `FMA_THREADS` when set). Each
//! replication draws from its own stream derived from `(base_seed, rep)` and
//! results are collected in replication order, so output files are
//! byte-identical across runs and thread counts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, Fma1Context, Fma1Method};
use crate::error::{Error, Result};
use crate::fts::{self, Prepared};
use crate::selection::{self, SelectionParams};
use crate::simulate::{self, OperatorScale, SigmaProfile, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Ind,
    Lb,
    Aicc,
    Ffpe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    #[serde(rename = "D", alias = "dim")]
    pub dim: usize,
    pub q: usize,
    pub kappas: Vec<f64>,
    pub sigma_profile: SigmaProfile,
    #[serde(default)]
    pub d_grid: Vec<usize>,
    #[serde(default)]
    pub methods: Vec<Fma1Method>,
    pub reps: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub selectors: Vec<Selector>,
    #[serde(default)]
    pub selection: SelectionParams,
    #[serde(default)]
    pub operator_scale: OperatorScale,
}

impl Design {
    pub fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("design{index}"))
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidInput("reps must be at least 1".into()));
        }
        if !self.methods.is_empty() && self.q != 1 {
            return Err(Error::InvalidInput("estimation-error methods need q = 1".into()));
        }
        if !self.methods.is_empty() && self.d_grid.is_empty() {
            return Err(Error::InvalidInput("methods were given without a d_grid".into()));
        }
        self.sim_config(0).validate()
    }

    fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            dim: self.dim,
            q: self.q,
            kappas: self.kappas.clone(),
            sigma_profile: self.sigma_profile,
            n: self.n,
            seed,
            operator_scale: self.operator_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub designs: Vec<Design>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub selection: Option<PathBuf>,
    #[serde(default)]
    pub audit: Option<PathBuf>,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.designs.is_empty() {
            return Err(Error::InvalidInput("benchmark config has no designs".into()));
        }
        self.designs.iter().try_for_each(Design::validate)
    }
}

/// Outcome of one replication of one design.
#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub rep: usize,
    /// `(d, method, error or failure message)` in grid order.
    pub errors: Vec<(usize, Fma1Method, std::result::Result<f64, String>)>,
    /// `(quantity, chosen value or failure)`, e.g. `("lb_q", Ok(1))`.
    pub selections: Vec<(String, std::result::Result<usize, String>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub design: String,
    pub sigma_profile: SigmaProfile,
    pub n: usize,
    pub dim: usize,
    pub d: usize,
    pub method: Fma1Method,
    pub ok: usize,
    pub failed: usize,
    pub mean: f64,
    /// `None` with fewer than two successful replications.
    pub stderr: Option<f64>,
    pub median: f64,
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub design: Design,
    pub label: String,
    pub reps: Vec<RepResult>,
}

impl DesignResult {
    pub fn errors(&self, d: usize, method: Fma1Method) -> Vec<f64> {
        self.reps
            .iter()
            .flat_map(|r| r.errors.iter())
            .filter(|(dd, m, e)| *dd == d && *m == method && e.is_ok())
            .map(|(_, _, e)| *e.as_ref().expect("filtered"))
            .collect()
    }

    pub fn summaries(&self) -> Vec<CellSummary> {
        let mut out = Vec::new();
        for &d in &self.design.d_grid {
            for &method in &self.design.methods {
                let vals = self.errors(d, method);
                let failed = self.reps.len() - vals.len();
                let (mean, stderr, median) = describe(&vals);
                out.push(CellSummary {
                    design: self.label.clone(),
                    sigma_profile: self.design.sigma_profile,
                    n: self.design.n,
                    dim: self.design.dim,
                    d,
                    method,
                    ok: vals.len(),
                    failed,
                    mean,
                    stderr,
                    median,
                });
            }
        }
        out
    }

    /// Counts of each chosen value per selected quantity.
    pub fn selection_counts(&self) -> BTreeMap<String, BTreeMap<String, usize>> {
        let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for r in &self.reps {
            for (what, v) in &r.selections {
                let key = match v {
                    Ok(x) => x.to_string(),
                    Err(_) => "failed".to_string(),
                };
                *counts.entry(what.clone()).or_default().entry(key).or_default() += 1;
            }
        }
        counts
    }

    pub fn selected(&self, what: &str) -> Vec<usize> {
        self.reps
            .iter()
            .flat_map(|r| r.selections.iter())
            .filter(|(w, v)| w == what && v.is_ok())
            .map(|(_, v)| *v.as_ref().expect("filtered"))
            .collect()
    }
}

fn describe(vals: &[f64]) -> (f64, Option<f64>, f64) {
    if vals.is_empty() {
        return (f64::NAN, None, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let stderr = (vals.len() > 1).then(|| {
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    let mut sorted = vals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
    (mean, stderr, median)
}

/// Runs a single replication.
pub fn run_replication(design: &Design, rep: usize) -> RepResult {
    let mut rng = simulate::replication_rng(design.base_seed, rep as u64);
    let config = design.sim_config(design.base_seed);
    let mut errors = Vec::new();
    let mut selections = Vec::new();
    let drawn = simulate::simulate_fma_with_rng(&config, &mut rng).and_then(|(s, m)| Ok((Prepared::new(&s)?, m)));
    let (prep, truth) = match drawn {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            for &d in &design.d_grid {
                for &m in &design.methods {
                    errors.push((d, m, Err(msg.clone())));
                }
            }
            for s in &design.selectors {
                selections.push((format!("{s:?}").to_lowercase(), Err(msg.clone())));
            }
            return RepResult { rep, errors, selections };
        }
    };

    if !design.selectors.is_empty() {
        record_selection(design, &prep, &mut selections);
    }
    if !design.methods.is_empty() {
        match Fma1Context::from_prepared(prep) {
            Ok(ctx) => {
                for &d in &design.d_grid {
                    for &m in &design.methods {
                        let e = baselines::estimate(&ctx, m, d)
                            .and_then(|est| baselines::estimation_error(&truth.theta[0], &est.embedded))
                            .map_err(|e| e.to_string());
                        errors.push((d, m, e));
                    }
                }
            }
            Err(e) => {
                for &d in &design.d_grid {
                    for &m in &design.methods {
                        errors.push((d, m, Err(e.to_string())));
                    }
                }
            }
        }
    }
    RepResult { rep, errors, selections }
}

fn record_selection(design: &Design, prep: &Prepared, out: &mut Vec<(String, std::result::Result<usize, String>)>) {
    let params = &design.selection;
    let has = |s: Selector| design.selectors.contains(&s);
    let ind = selection::select_d(prep, params);
    let d_ind = ind.as_ref().map(|(d, _)| *d).map_err(|e| e.to_string());
    if let Ok(d) = fts::tve(&prep.eig, params.tve_fraction) {
        out.push(("tve_d".to_string(), Ok(d)));
    }
    if has(Selector::Ind) {
        out.push(("ind_d".to_string(), d_ind.clone()));
    }
    if has(Selector::Lb) || has(Selector::Aicc) {
        let scores = d_ind.clone().and_then(|d| prep.scores(d).map_err(|e| e.to_string()));
        if has(Selector::Lb) {
            let q = scores.as_ref().map_err(Clone::clone).and_then(|s| {
                selection::select_q_lb(&s.scores, params.h_bar, params.alpha, params.q_max)
                    .map(|(q, _)| q)
                    .map_err(|e| e.to_string())
            });
            out.push(("lb_q".to_string(), q));
        }
        if has(Selector::Aicc) {
            let q = scores.as_ref().map_err(Clone::clone).and_then(|s| {
                selection::select_q_aicc(&s.scores, params.q_max, params.k).map(|(q, _)| q).map_err(|e| e.to_string())
            });
            out.push(("aicc_q".to_string(), q));
        }
    }
    if has(Selector::Ffpe) {
        match selection::select_dq_ffpe(prep, params.d_max, params.q_max, params.k) {
            Ok(((d, q), _)) => {
                out.push(("ffpe_d".to_string(), Ok(d)));
                out.push(("ffpe_q".to_string(), Ok(q)));
            }
            Err(e) => {
                out.push(("ffpe_d".to_string(), Err(e.to_string())));
                out.push(("ffpe_q".to_string(), Err(e.to_string())));
            }
        }
    }
}

/// Thread pool honoring `FMA_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FMA_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Parse(format!("FMA_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Parse("FMA_THREADS must be a positive integer".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn run_design(design: &Design, index: usize, pool: &rayon::ThreadPool) -> Result<DesignResult> {
    design.validate()?;
    let reps = pool.install(|| (0..design.reps).into_par_iter().map(|r| run_replication(design, r)).collect());
    Ok(DesignResult { design: design.clone(), label: design.label(index), reps })
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<DesignResult>> {
    config.validate()?;
    let pool = thread_pool()?;
    config.designs.iter().enumerate().map(|(i, d)| run_design(d, i, &pool)).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report<W: Write>(results: &[DesignResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["design", "sigma_profile", "n", "D", "d", "method", "reps_ok", "reps_failed", "mean", "stderr", "median"])?;
    for r in results {
        for s in r.summaries() {
            let profile = format!("{:?}", s.sigma_profile).to_lowercase();
            let finite = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
            w.write_record([
                s.design.clone(),
                profile,
                s.n.to_string(),
                s.dim.to_string(),
                s.d.to_string(),
                s.method.label().to_string(),
                s.ok.to_string(),
                s.failed.to_string(),
                finite(s.mean),
                fmt_opt(s.stderr),
                finite(s.median),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_selection<W: Write>(results: &[DesignResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["design", "n", "quantity", "value", "count"])?;
    for r in results {
        for (what, counts) in r.selection_counts() {
            let mut entries: Vec<_> = counts.into_iter().collect();
            // numeric values in numeric order, failures last
            entries.sort_by_key(|(k, _)| k.parse::<usize>().unwrap_or(usize::MAX));
            for (value, count) in entries {
                w.write_record([r.label.clone(), r.design.n.to_string(), what.clone(), value, count.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-replication log; values are written with full round-trip precision.
pub fn write_audit<W: Write>(results: &[DesignResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["design", "rep", "kind", "d", "name", "value", "error"])?;
    for r in results {
        for rep in &r.reps {
            for (d, m, e) in &rep.errors {
                let (value, err) = match e {
                    Ok(v) => (format!("{v:?}"), String::new()),
                    Err(msg) => (String::new(), msg.clone()),
                };
                w.write_record([r.label.clone(), rep.rep.to_string(), "error".into(), d.to_string(), m.label().into(), value, err])?;
            }
            for (what, v) in &rep.selections {
                let (value, err) = match v {
                    Ok(x) => (x.to_string(), String::new()),
                    Err(msg) => (String::new(), msg.clone()),
                };
                w.write_record([r.label.clone(), rep.rep.to_string(), "selection".into(), String::new(), what.clone(), value, err])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Writes whichever outputs the config names.
pub fn write_outputs(config: &BenchmarkConfig, results: &[DesignResult]) -> Result<()> {
    if let Some(p) = &config.report {
        write_report(results, create(p)?)?;
    }
    if let Some(p) = &config.selection {
        write_selection(results, create(p)?)?;
    }
    if let Some(p) = &config.audit {
        write_audit(results, create(p)?)?;
    }
    Ok(())
}
