use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in `{path}`: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("column `{0}` appears more than once")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, binary column `{column}`: value {value} is not 0 or 1")]
    NonBinary {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("N = {n} must exceed p = {p} (N ≤ p)")]
    TooFewSamples { n: usize, p: usize },
    #[error("covariate Gram matrix is numerically singular (condition estimate {condition:.3e})")]
    SingularGram { condition: f64 },
    #[error("rank d = {d} outside [1, {max}]")]
    RankOutOfRange { d: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("task {task} is not binary")]
    NonBinaryTask { task: usize },
    #[error("perfect separation in task {task}: coefficients diverge (norm {norm:.3e}), MLE does not exist")]
    Separation { task: usize, norm: f64 },
    #[error("task {task} did not converge within {iterations} iterations")]
    NotConverged { task: usize, iterations: usize },
    #[error("coefficient draw has numerical rank {found}, expected {expected}")]
    DegenerateDraw { expected: usize, found: usize },
    #[error("replication {rep} (seed {seed}) failed: {source}")]
    Replication {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable tag printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Csv { .. } => "io",
            Error::Schema(_)
            | Error::MissingColumn(_)
            | Error::DuplicateColumn(_)
            | Error::NonNumeric { .. }
            | Error::NonBinary { .. } => "data",
            Error::InvalidParameter(_) | Error::RankOutOfRange { .. } => "usage",
            Error::NotConverged { .. } => "nonconvergence",
            Error::Replication { source, .. } => source.code(),
            _ => "numerical",
        }
    }

    /// Process exit status: 2 usage, 3 I/O and input data, 4 numerical
    /// failure, 5 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "usage" => 2,
            "io" | "data" => 3,
            "nonconvergence" => 5,
            _ => 4,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
