use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimation pipeline.
///
/// Variants fall in two families: validation problems with the caller's
/// input (bad shapes, out-of-range parameters, unparsable files) and
/// numerical failures (singular systems, non-convergent iterations).
/// [`Error::is_numerical`] separates them; the CLI maps the first to exit
/// code 2 and the second to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid has {points} points but the basis needs at least {dim}")]
    GridTooCoarse { points: usize, dim: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("evaluation point {0} lies outside [0, 1]")]
    PointOutOfDomain(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("lag {lag} too large for a sample of length {n}")]
    LagTooLarge { lag: usize, n: usize },
    #[error("sample must be centered before computing covariances")]
    NotCentered,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigensolver did not converge within {0} sweeps")]
    ConvergenceFailure(usize),
    #[error("fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("requested dimension {requested} exceeds available rank {available}")]
    RankExceeded { requested: usize, available: usize },
    #[error("block covariance is singular (condition number {0:e})")]
    SingularGamma(f64),
    #[error("innovation covariance V_{index} is singular")]
    SingularV { index: usize },
    #[error("lag-0 covariance is not positive semidefinite (min eigenvalue {0:e})")]
    NonPsdInput(f64),
    #[error("sample is empty")]
    EmptySample,
    #[error("tail score covariance is singular")]
    SingularTailCovariance,
    #[error("independence test ran out of directions: d*={d} + p={p} exceeds rank {rank}")]
    RankExhausted { d: usize, p: usize, rank: usize },
    #[error("lag-0 score covariance is singular")]
    SingularC0,
    #[error("AICC penalty undefined: n*d - q*d^2 - 2 = {0} <= 0")]
    PenaltyUndefined(f64),
    #[error("random operator draw is numerically zero after {0} attempts")]
    DegenerateDraw(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure(_)
                | Error::SingularGamma(_)
                | Error::SingularV { .. }
                | Error::NonPsdInput(_)
                | Error::SingularTailCovariance
                | Error::RankExhausted { .. }
                | Error::SingularC0
                | Error::PenaltyUndefined(_)
                | Error::DegenerateDraw(_)
        )
    }
}
