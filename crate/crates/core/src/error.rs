use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid cost: c must be positive, got {0}")]
    InvalidCost(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("conflicting configuration: {0}")]
    ConfigConflict(String),

    #[error("no exponential tilt for this drift: {0}")]
    TiltInfeasible(String),

    #[error("tabulated prior exhausted before step {step} (t = {time})")]
    PriorExhausted { step: usize, time: f64 },

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("quadrature did not reach tolerance within {evaluations} evaluations (error estimate {error:e})")]
    QuadratureFailure { evaluations: usize, error: f64 },

    #[error("hypoexponential rates {0} and {1} coincide")]
    BetaCollision(f64, f64),

    #[error("unsupported tilt for the jump generator: {0}")]
    UnsupportedTilt(String),

    #[error("degenerate series: increments of coordinate {coordinate} have zero variance")]
    DegenerateSeries { coordinate: usize },

    #[error("invalid mortality series: {0}")]
    InvalidSeries(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidModel(_)
            | Error::InvalidPrior(_)
            | Error::InvalidCost(_)
            | Error::Config(_)
            | Error::ConfigConflict(_)
            | Error::Json(_) => ErrorKind::Config,
            Error::InvalidSeries(_)
            | Error::DegenerateSeries { .. }
            | Error::PriorExhausted { .. }
            | Error::Io { .. }
            | Error::Csv { .. } => ErrorKind::Data,
            Error::TiltInfeasible(_)
            | Error::Domain { .. }
            | Error::QuadratureFailure { .. }
            | Error::BetaCollision(..)
            | Error::UnsupportedTilt(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
