use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_deviation:e})")]
    Asymmetric { max_deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite {what} at iteration {iteration}")]
    Divergence {
        what: &'static str,
        iteration: usize,
    },

    #[error("infeasible specification: {0}")]
    InfeasibleSpec(String),

    #[error("invalid network specification: {0}")]
    InvalidNetwork(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: dimensions {rows}x{cols} overflow the addressable size")]
    DimensionOverflow { path: PathBuf, rows: u64, cols: u64 },

    #[error("{path}: payload length mismatch: expected {expected} bytes, found {actual}")]
    PayloadLength {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
