//! C ABI for `fmats`.
//!
//! Samples and fitted models are passed across the boundary as opaque
//! handles created and released by this library. Every fallible function
//! returns an [`FmatsStatus`]; on failure a description of the error is
//! available from [`fmats_last_error`] on the same thread. Matrices are
//! exchanged as row-major `double` buffers whose length the caller states.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fmats::io::{ModelDocument, Provenance};
use fmats::selection::{self, Methods, SelectionParams};
use fmats::simulate::{OperatorScale, SigmaProfile, SimConfig};
use fmats::{Error, FmaModel, FunctionalSample, Prepared};
use nalgebra::DMatrix;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmatsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments or data failed validation.
    InvalidInput = 2,
    /// A numerical procedure failed (singular system, no convergence).
    Numerical = 3,
    /// Reading or writing a file failed.
    Io = 4,
    /// The caller's output buffer has the wrong length.
    BufferSize = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmatsSigmaProfile {
    Slow = 0,
    Fast = 1,
}

/// Opaque functional sample.
pub struct FmatsSample {
    inner: FunctionalSample,
}

/// Opaque fitted FMA model.
pub struct FmatsModel {
    inner: FmaModel,
}

/// Choices made by the selection procedures with default settings.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FmatsSelection {
    pub d_tve: usize,
    pub d_ind: usize,
    pub q_lb: usize,
    pub q_aicc: usize,
    pub d_ffpe: usize,
    pub q_ffpe: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> FmatsStatus {
    match err {
        Error::Io(_) => FmatsStatus::Io,
        e if e.is_numerical() => FmatsStatus::Numerical,
        _ => FmatsStatus::InvalidInput,
    }
}

enum Failure {
    Null(&'static str),
    Buffer { expected: usize, got: usize },
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> FmatsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmatsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            FmatsStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { expected, got })) => {
            set_error(format!("buffer holds {got} values but {expected} are needed"));
            FmatsStatus::BufferSize
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            FmatsStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> std::result::Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a pointer obtained from this library
    // (or a valid caller-owned object) that outlives the call.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn slice_in<'a>(p: *const f64, len: usize, what: &'static str) -> std::result::Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: the caller guarantees `p` points to `len` readable doubles.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Outcome {
    if len != values.len() {
        return Err(Failure::Buffer { expected: values.len(), got: len });
    }
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(Failure::Null("output buffer"));
    }
    // SAFETY: the caller guarantees `out` points to `len` writable doubles.
    unsafe { std::slice::from_raw_parts_mut(out, len) }.copy_from_slice(values);
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn matrix_in(data: *const f64, rows: usize, cols: usize) -> std::result::Result<DMatrix<f64>, Failure> {
    let len = rows.checked_mul(cols).ok_or(Failure::Lib(Error::InvalidInput("matrix size overflows".into())))?;
    let s = slice_in(data, len, "data")?;
    Ok(DMatrix::from_row_slice(rows, cols, s))
}

fn path_in<'a>(p: *const c_char) -> std::result::Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) };
    let s = s.to_str().map_err(|_| Failure::Lib(Error::InvalidInput("path is not valid UTF-8".into())))?;
    Ok(Path::new(s))
}

fn store<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null("output handle"));
    }
    // SAFETY: `out` is non-null and points to writable storage for a pointer.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message describing the last failure on this thread, or null when the
/// last call succeeded. The pointer stays valid until the next call into
/// this library on the same thread.
#[no_mangle]
pub extern "C" fn fmats_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a sample from `n` curves of `dim` Fourier coefficients each,
/// given row-major in `data`.
#[no_mangle]
pub extern "C" fn fmats_sample_from_coeffs(data: *const f64, n: usize, dim: usize, out: *mut *mut FmatsSample) -> FmatsStatus {
    guard(|| {
        let m = matrix_in(data, n, dim)?;
        let inner = FunctionalSample::from_coeffs(m)?;
        store(out, FmatsSample { inner })
    })
}

/// Simulates an FMA(q) sample. `kappas` holds `q` weights and may be null
/// when `q` is 0.
#[no_mangle]
pub extern "C" fn fmats_sample_simulate(
    n: usize,
    dim: usize,
    q: usize,
    kappas: *const f64,
    profile: FmatsSigmaProfile,
    seed: u64,
    out: *mut *mut FmatsSample,
) -> FmatsStatus {
    guard(|| {
        let kappas = slice_in(kappas, q, "kappas")?.to_vec();
        let config = SimConfig {
            dim,
            q,
            kappas,
            sigma_profile: match profile {
                FmatsSigmaProfile::Slow => SigmaProfile::Slow,
                FmatsSigmaProfile::Fast => SigmaProfile::Fast,
            },
            n,
            seed,
            operator_scale: OperatorScale::Product,
        };
        let (inner, _) = fmats::simulate::simulate_fma(&config)?;
        store(out, FmatsSample { inner })
    })
}

/// Number of curves, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn fmats_sample_len(sample: *const FmatsSample) -> usize {
    // SAFETY: see `non_null`.
    unsafe { sample.as_ref() }.map_or(0, |s| s.inner.n())
}

/// Number of basis coefficients per curve, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn fmats_sample_dim(sample: *const FmatsSample) -> usize {
    // SAFETY: see `non_null`.
    unsafe { sample.as_ref() }.map_or(0, |s| s.inner.dim())
}

/// Copies the coefficients (row-major, `len` = n·dim) into `out`.
#[no_mangle]
pub extern "C" fn fmats_sample_coeffs(sample: *const FmatsSample, out: *mut f64, len: usize) -> FmatsStatus {
    guard(|| {
        let s = non_null(sample, "sample")?;
        copy_out(&row_major(s.inner.coeffs()), out, len)
    })
}

/// Releases a sample. Null is ignored.
#[no_mangle]
pub extern "C" fn fmats_sample_free(sample: *mut FmatsSample) {
    if !sample.is_null() {
        // SAFETY: the pointer came from `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(sample) });
    }
}

/// Fits an FMA(q) model on the first `d` principal directions. `k` = 0
/// selects the default number of lags.
#[no_mangle]
pub extern "C" fn fmats_fit(sample: *const FmatsSample, d: usize, q: usize, k: usize, out: *mut *mut FmatsModel) -> FmatsStatus {
    guard(|| {
        let s = non_null(sample, "sample")?;
        let k = (k > 0).then_some(k);
        let inner = fmats::fit_fma(&s.inner, d, q, k)?;
        store(out, FmatsModel { inner })
    })
}

/// Runs every selection procedure with default parameters.
#[no_mangle]
pub extern "C" fn fmats_select(sample: *const FmatsSample, out: *mut FmatsSelection) -> FmatsStatus {
    guard(|| {
        let s = non_null(sample, "sample")?;
        if out.is_null() {
            return Err(Failure::Null("output selection"));
        }
        let prep = Prepared::new(&s.inner)?;
        let r = selection::select(&prep, &SelectionParams::default(), Methods::ALL, None)?;
        let sel = FmatsSelection {
            d_tve: r.d_tve.unwrap_or(0),
            d_ind: r.d_ind.unwrap_or(0),
            q_lb: r.q_lb.unwrap_or(0),
            q_aicc: r.q_aicc.unwrap_or(0),
            d_ffpe: r.d_ffpe.unwrap_or(0),
            q_ffpe: r.q_ffpe.unwrap_or(0),
        };
        // SAFETY: `out` is non-null and points to a caller-owned struct.
        unsafe { *out = sel };
        Ok(())
    })
}

/// Subspace dimension d of a model, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn fmats_model_d(model: *const FmatsModel) -> usize {
    // SAFETY: see `non_null`.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.d)
}

/// Order q of a model, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn fmats_model_q(model: *const FmatsModel) -> usize {
    // SAFETY: see `non_null`.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.q)
}

/// Basis dimension D of a model, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn fmats_model_dim(model: *const FmatsModel) -> usize {
    // SAFETY: see `non_null`.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.basis.dim)
}

/// Copies `θ̂_lag` (d×d, row-major, 1-based lag) into `out`.
#[no_mangle]
pub extern "C" fn fmats_model_theta(model: *const FmatsModel, lag: usize, out: *mut f64, len: usize) -> FmatsStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        if lag == 0 || lag > m.inner.q {
            return Err(Error::InvalidInput(format!("lag {lag} outside 1..={}", m.inner.q)).into());
        }
        copy_out(&row_major(&m.inner.theta[lag - 1]), out, len)
    })
}

/// Forecast of the curve following the `n` rows of `data` (row-major,
/// D columns); writes D coefficients to `out`.
#[no_mangle]
pub extern "C" fn fmats_model_predict(model: *const FmatsModel, data: *const f64, n: usize, out: *mut f64, len: usize) -> FmatsStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let x = matrix_in(data, n, m.inner.basis.dim)?;
        let p = fmats::predict_one_step(&m.inner, &x)?;
        copy_out(p.coeffs.as_slice(), out, len)
    })
}

/// Kernel of `θ̂_lag` on a `grid_size`×`grid_size` equispaced grid
/// (row-major, row index s).
#[no_mangle]
pub extern "C" fn fmats_model_kernel(model: *const FmatsModel, lag: usize, grid_size: usize, out: *mut f64, len: usize) -> FmatsStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let (_, k) = fmats::io::model_kernel(&m.inner, lag, grid_size)?;
        copy_out(&row_major(&k), out, len)
    })
}

/// Writes the model as a JSON document.
#[no_mangle]
pub extern "C" fn fmats_model_save(model: *const FmatsModel, path: *const c_char) -> FmatsStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        let path = path_in(path)?;
        ModelDocument::from_model(&m.inner, Provenance::capture(None)).save(path)?;
        Ok(())
    })
}

/// Reads a model JSON document.
#[no_mangle]
pub extern "C" fn fmats_model_load(path: *const c_char, out: *mut *mut FmatsModel) -> FmatsStatus {
    guard(|| {
        let path = path_in(path)?;
        let inner = ModelDocument::load(path)?.to_model()?;
        store(out, FmatsModel { inner })
    })
}

/// Releases a model. Null is ignored.
#[no_mangle]
pub extern "C" fn fmats_model_free(model: *mut FmatsModel) {
    if !model.is_null() {
        // SAFETY: the pointer came from `Box::into_raw` in this library.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Upper-`alpha` quantile of the χ² distribution with `df` degrees of
/// freedom.
#[no_mangle]
pub extern "C" fn fmats_chi_sq_quantile(df: usize, alpha: f64, out: *mut f64) -> FmatsStatus {
    guard(|| {
        if df == 0 || !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!("need df >= 1 and 0 < alpha < 1, got df={df}, alpha={alpha}")).into());
        }
        if out.is_null() {
            return Err(Failure::Null("output value"));
        }
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = fmats::chisq::chi_sq_quantile(df, alpha) };
        Ok(())
    })
}
