//! Estimation of functional moving average (FMA) models for functional time
//! series.
//!
//! Curves are represented by coefficients in an orthonormal Fourier basis.
//! The estimator projects the sample onto its leading principal directions
//! and runs the Innovations Algorithm on the resulting score vectors. Order
//! and dimension selection, a Monte Carlo simulator and two comparison
//! estimators for FMA(1) are included.

pub mod baselines;
pub mod basis;
pub mod benchmark;
pub mod cli;
pub mod chisq;
pub mod error;
pub mod fts;
pub mod innovations;
pub mod io;
pub mod linalg;
pub mod selection;
pub mod simulate;

pub use basis::{BasisKind, BasisSpec, CurveGrid};
pub use error::{Error, Result};
pub use fts::{FunctionalSample, Prepared};
pub use innovations::{fit_fma, predict_one_step, FmaModel};
pub use simulate::{simulate_fma, SigmaProfile, SimConfig, TrueModel};
