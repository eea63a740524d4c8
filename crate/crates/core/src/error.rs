use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("panels are not aligned: {0}")]
    Misaligned(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("panel contains {count} missing cells; fill gaps before this step")]
    MissingCells { count: usize },

    #[error("zero variance for turbine(s) {}", .0.join(", "))]
    ZeroVarianceTurbine(Vec<String>),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("circular mean is undefined (resultant length {0:e})")]
    DegenerateMean(f64),

    #[error("no present cells to average")]
    NoData,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        line: u64,
        column: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            column,
            message: message.into(),
        }
    }
}
