use std::path::PathBuf;

use thiserror::Error;

/// A malformed JSONL line, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid reasoning path: {0}")]
    InvalidPath(String),

    #[error("no candidates to select from")]
    NoCandidates,

    #[error("sample size must be at least 1")]
    InvalidSampleSize,

    #[error("estimator called on an empty batch")]
    EmptyBatch,

    #[error("invalid oracle: {0}")]
    InvalidOracle(String),

    #[error("enumeration needs {paths}^{n} outcomes, above the cap of {cap}")]
    EnumerationTooLarge { paths: usize, n: usize, cap: u64 },

    #[error("value outside the function domain: {0}")]
    Domain(String),

    #[error("mixture fit is degenerate: {0}")]
    FitDegenerate(String),

    #[error("model-error comparison assumption violated: {0}")]
    Assumption(String),

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{} malformed line(s); first: {}", .0.len(), .0[0])]
    Parse(Vec<LineError>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
