use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no optimal lambda exists for gamma = {gamma} with beta0 = {beta0} (need gamma + beta0 < 1)")]
    NoOptimalLambda { gamma: f64, beta0: f64 },

    #[error("degenerate kernel {kernel}: alpha = {alpha} is not positive")]
    DegenerateKernel { kernel: String, alpha: f64 },

    #[error("kernel {0} is not lambda-scalable")]
    NotLambdaScalable(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("factorization failed: matrix of order {n} is not numerically positive definite")]
    FactorizationFailure { n: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("exact enumeration needs {needed} evaluations, budget is {budget}")]
    CombinatorialBudget { needed: u128, budget: u128 },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error at row {row}, column {col}: {msg}")]
    Csv { row: usize, col: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("at n = {n}, d = {d}: {source}")]
    GridPoint {
        n: usize,
        d: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips grid-point annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::GridPoint { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::FactorizationFailure { .. }
                | Error::NoOptimalLambda { .. }
                | Error::DegenerateKernel { .. }
                | Error::NotLambdaScalable(_)
                | Error::DegenerateData(_)
                | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
