use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` named in the schema is not present in the header")]
    MissingColumn(String),

    #[error("duplicate attribute column `{0}`")]
    DuplicateColumn(String),

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("empty player id on data row {0}")]
    EmptyPlayerId(usize),

    #[error("need at least 2 attributes, got {0}")]
    TooFewAttributes(usize),

    #[error("need more rows than attributes: n = {n}, p = {p}")]
    TooFewRows { n: usize, p: usize },

    #[error("column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (max off-diagonal {off_diag:e})")]
    NoConvergence { sweeps: usize, off_diag: f64 },

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("linear system is singular or not positive definite")]
    Singular,

    #[error("attribute names do not match the fitted model")]
    AttributeMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("target is constant; R² is undefined")]
    ConstantTarget,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
