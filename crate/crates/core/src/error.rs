use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite function value while probing coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },

    #[error("non-finite objective value at iteration {iteration} (step size too large?)")]
    Diverged { iteration: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("point outside the domain: {0}")]
    OutOfDomain(String),

    #[error("retraction undefined: x + step is the zero vector")]
    ZeroRetraction,

    #[error("matrix is not a tangent operator: |Hx| = {0:e}")]
    NotTangentOperator(f64),

    #[error("need at least {needed} usable iterations for a decay fit, got {got}")]
    TooFewIterations { needed: usize, got: usize },

    #[error("enumeration would produce {0} points, above the cap of 1000000")]
    EnumerationTooLarge(u128),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown condition `{0}` (expected weak-quasi-convex, rsi or pl)")]
    UnknownCondition(String),

    #[error("{experiment} does not support the {family} family")]
    Unsupported { experiment: String, family: String },

    #[error("config error at `{path}`: {message}")]
    ConfigParse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
