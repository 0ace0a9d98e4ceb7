//! File formats: headerless coefficient CSV, curve grid CSV, model JSON and
//! kernel grid CSV.

use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{self, BasisSpec, CurveGrid};
use crate::error::{Error, Result};
use crate::innovations::FmaModel;
use crate::simulate::TrueModel;

pub const SCHEMA_VERSION: u32 = 1;

fn parse_f64(field: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("row {}: '{}' is not a number", row + 1, field)))
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let m = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != m) {
        return Err(Error::Parse(format!("row {} has {} fields, expected {m}", i + 1, rows[i].len())));
    }
    Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

/// Reads a headerless table of basis coefficients, one curve per row.
pub fn read_coeffs<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(rec.iter().map(|f| parse_f64(f, i)).collect::<Result<Vec<_>>>()?);
    }
    rows_to_matrix(rows)
}

pub fn read_coeffs_path(path: &Path) -> Result<DMatrix<f64>> {
    read_coeffs(std::fs::File::open(path)?)
}

/// Writes a matrix as headerless CSV with round-trip precision.
pub fn write_matrix<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_path(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_matrix(m, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Reads curves sampled on a common grid. The header row is a label
/// followed by the grid points; every other row is a curve identifier
/// followed by the curve's values at those points.
pub fn read_grid<R: Read>(input: R) -> Result<(Vec<String>, CurveGrid)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse("grid header needs a label and at least one point".into()));
    }
    let points = header.iter().skip(1).map(|f| parse_f64(f, 0)).collect::<Result<Vec<_>>>()?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", i + 2, rec.len(), header.len())));
        }
        ids.push(rec.get(0).unwrap_or_default().to_string());
        rows.push(rec.iter().skip(1).map(|f| parse_f64(f, i + 1)).collect::<Result<Vec<_>>>()?);
    }
    let values = rows_to_matrix(rows)?;
    Ok((ids, CurveGrid::new(points, values)?))
}

/// Writes a kernel grid: a header row `s` followed by the t values, then
/// one row per s.
pub fn write_kernel<W: Write>(points: &[f64], kernel: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let mut header = vec!["s".to_string()];
    header.extend(points.iter().map(|t| format!("{t:?}")));
    w.write_record(&header)?;
    for (r, s) in points.iter().enumerate() {
        let mut row = vec![format!("{s:?}")];
        row.extend(kernel.row(r).iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub command_line: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

impl Provenance {
    pub fn capture(seed: Option<u64>) -> Self {
        let command_line = std::env::args().collect::<Vec<_>>().join(" ");
        Self { seed, command_line, timestamp: timestamp() }
    }
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Serialized form of a fitted (or true) FMA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub basis: BasisSpec,
    pub mean: Vec<f64>,
    pub eigvals: Vec<f64>,
    /// D rows of d entries.
    pub eigvecs: Vec<Vec<f64>>,
    pub d: usize,
    pub q: usize,
    pub k_used: usize,
    /// q matrices of d rows of d entries.
    pub theta: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub provenance: Provenance,
    #[serde(default)]
    pub true_model: bool,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("{what} must be {nrows}x{ncols}")));
    }
    let m = DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("model document"));
    }
    Ok(m)
}

impl ModelDocument {
    pub fn from_model(model: &FmaModel, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            basis: model.basis,
            mean: model.mean.iter().copied().collect(),
            eigvals: model.eigvals_all.clone(),
            eigvecs: to_rows(&model.eigvecs),
            d: model.d,
            q: model.q,
            k_used: model.k_used,
            theta: model.theta.iter().map(to_rows).collect(),
            v: to_rows(&model.v),
            provenance,
            true_model: false,
        }
    }

    /// The generating model, expressed in the full coefficient space with
    /// identity eigenvectors.
    pub fn from_true_model(truth: &TrueModel, basis: BasisSpec, provenance: Provenance) -> Self {
        let dim = truth.sigma.len();
        let ce = truth.innovation_cov();
        Self {
            schema_version: SCHEMA_VERSION,
            basis,
            mean: vec![0.0; dim],
            eigvals: ce.diagonal().iter().copied().collect(),
            eigvecs: to_rows(&DMatrix::identity(dim, dim)),
            d: dim,
            q: truth.theta.len(),
            k_used: 0,
            theta: truth.theta.iter().map(to_rows).collect(),
            v: to_rows(&ce),
            provenance,
            true_model: true,
        }
    }

    pub fn to_model(&self) -> Result<FmaModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema version {}", self.schema_version)));
        }
        let dim = self.basis.dim;
        if self.mean.len() != dim {
            return Err(Error::Parse(format!("mean must have {dim} entries")));
        }
        if self.theta.len() != self.q {
            return Err(Error::Parse(format!("theta must hold {} matrices", self.q)));
        }
        let eigvecs = from_rows(&self.eigvecs, dim, self.d, "eigvecs")?;
        let theta = self.theta.iter().map(|t| from_rows(t, self.d, self.d, "theta")).collect::<Result<Vec<_>>>()?;
        Ok(FmaModel {
            basis: self.basis,
            eigvecs,
            eigvals_all: self.eigvals.clone(),
            d: self.d,
            q: self.q,
            k_used: self.k_used,
            theta,
            v: from_rows(&self.v, self.d, self.d, "V")?,
            mean: DVector::from_vec(self.mean.clone()),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

/// Kernel grid of lag `lag` of a model on `grid_size` equispaced points.
pub fn model_kernel(model: &FmaModel, lag: usize, grid_size: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if lag == 0 || lag > model.q {
        return Err(Error::InvalidInput(format!("model has no operator at lag {lag} (q = {})", model.q)));
    }
    if grid_size < 2 {
        return Err(Error::InvalidInput("kernel grid needs at least 2 points".into()));
    }
    let points = CurveGrid::equispaced(grid_size);
    let k = basis::operator_kernel(&model.basis, &model.embedded_theta(lag), &points)?;
    Ok((points, k))
}
