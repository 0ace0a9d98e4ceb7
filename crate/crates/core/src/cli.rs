//! Command-line front end. Exit codes: 0 success, 2 invalid input, 3
//! numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::basis::{self, BasisSpec};
use crate::benchmark::{self, BenchmarkConfig};
use crate::error::{Error, Result};
use crate::fts::{FunctionalSample, Prepared};
use crate::innovations::{fit_fma_prepared, predict_one_step};
use crate::io::{self, ModelDocument, Provenance};
use crate::selection::{self, Methods, SelectionParams};
use crate::simulate::{self, OperatorScale, SigmaProfile, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fmats", version, about = "Functional moving average estimation for functional time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an FMA(q) sample as a coefficient CSV
    Simulate(SimulateArgs),
    /// Fit an FMA(q) model on a d-dimensional principal subspace
    Fit(FitArgs),
    /// Select the dimension d and order q
    Select(SelectArgs),
    /// One-step-ahead forecast of the next curve
    Predict(PredictArgs),
    /// Run a replicated simulation study from a JSON config
    Benchmark(BenchmarkArgs),
    /// Convert curves on a grid into basis coefficients
    Ingest(IngestArgs),
    /// Evaluate an estimated operator kernel on a grid
    Kernel(KernelArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SigmaArg {
    Slow,
    Fast,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Product,
    SqrtProduct,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long = "D", default_value_t = basis::DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// κ_1..κ_q, comma separated
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub kappa: Vec<f64>,
    #[arg(long, value_enum, default_value = "fast")]
    pub sigma: SigmaArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "product")]
    pub operator_scale: ScaleArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the generating model as JSON
    #[arg(long)]
    pub true_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub q: usize,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectMethod {
    Ind,
    Lb,
    Aicc,
    Ffpe,
    All,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub method: SelectMethod,
    #[arg(long, default_value_t = 0.8)]
    pub tve: f64,
    /// Number of left-out directions in the independence test
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub hbar: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub qmax: usize,
    #[arg(long, default_value_t = 10)]
    pub dmax: usize,
    #[arg(long)]
    pub k: Option<usize>,
    /// Fixed d for the order selectors instead of the independence test
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "D", default_value_t = basis::DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "grid", default_value_t = 101)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_sample(path: &Path) -> Result<FunctionalSample> {
    FunctionalSample::from_coeffs(io::read_coeffs_path(path)?)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let config = SimConfig {
        dim: a.dim,
        q: a.q,
        kappas: a.kappa.clone(),
        sigma_profile: match a.sigma {
            SigmaArg::Slow => SigmaProfile::Slow,
            SigmaArg::Fast => SigmaProfile::Fast,
        },
        n: a.n,
        seed: a.seed,
        operator_scale: match a.operator_scale {
            ScaleArg::Product => OperatorScale::Product,
            ScaleArg::SqrtProduct => OperatorScale::SqrtProduct,
        },
    };
    let (sample, truth) = simulate::simulate_fma(&config)?;
    io::write_matrix(sample.coeffs(), output(&a.out)?)?;
    if let Some(p) = &a.true_model {
        ModelDocument::from_true_model(&truth, *sample.basis(), Provenance::capture(Some(a.seed))).save(p)?;
    }
    Ok(())
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let prep = Prepared::new(&load_sample(&a.input)?)?;
    let model = fit_fma_prepared(&prep, a.d, a.q, a.k)?;
    let doc = ModelDocument::from_model(&model, Provenance::capture(None));
    let mut out = output(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

pub fn cmd_select(a: &SelectArgs) -> Result<()> {
    let prep = Prepared::new(&load_sample(&a.input)?)?;
    let params = SelectionParams {
        tve_fraction: a.tve,
        tail_dirs: a.p,
        h_bar: a.hbar,
        alpha: a.alpha,
        q_max: a.qmax,
        d_max: a.dmax,
        k: a.k,
    };
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", params.alpha)));
    }
    let methods = match a.method {
        SelectMethod::Ind => Methods { ind: true, lb: false, aicc: false, ffpe: false },
        SelectMethod::Lb => Methods { ind: false, lb: true, aicc: false, ffpe: false },
        SelectMethod::Aicc => Methods { ind: false, lb: false, aicc: true, ffpe: false },
        SelectMethod::Ffpe => Methods { ind: false, lb: false, aicc: false, ffpe: true },
        SelectMethod::All => Methods::ALL,
    };
    let report = selection::select(&prep, &params, methods, a.d)?;
    let mut out = output(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = ModelDocument::load(&a.model)?.to_model()?;
    let data = io::read_coeffs_path(&a.input)?;
    let pred = predict_one_step(&model, &data)?;
    let row = nalgebra::DMatrix::from_row_slice(1, pred.coeffs.len(), pred.coeffs.as_slice());
    io::write_matrix(&row, output(&a.out)?)
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)?;
    let mut config: BenchmarkConfig = serde_json::from_str(&text)?;
    for (slot, over) in [(&mut config.report, &a.report), (&mut config.selection, &a.selection), (&mut config.audit, &a.audit)] {
        if over.is_some() {
            slot.clone_from(over);
        }
    }
    let results = benchmark::run_benchmark(&config)?;
    if config.report.is_none() {
        benchmark::write_report(&results, std::io::stdout().lock())?;
    }
    benchmark::write_outputs(&config, &results)
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let file = std::fs::File::open(&a.input)?;
    let (_, grid) = io::read_grid(file)?;
    let coeffs = basis::project_curves(&grid, &BasisSpec::fourier(a.dim)?)?;
    io::write_matrix(&coeffs, output(&a.out)?)
}

pub fn cmd_kernel(a: &KernelArgs) -> Result<()> {
    let model = ModelDocument::load(&a.model)?.to_model()?;
    let (points, k) = io::model_kernel(&model, a.lag, a.grid_size)?;
    io::write_kernel(&points, &k, output(&a.out)?)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Kernel(a) => cmd_kernel(a),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Parses `args` and runs the command, printing errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
