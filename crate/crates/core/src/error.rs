use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad tensor file: {reason}")]
    TensorFormat { path: PathBuf, reason: String },

    #[error("{path}: corrupt tensor payload: {reason}")]
    TensorCorrupt { path: PathBuf, reason: String },

    #[error("{path}:{line}: parse error: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("image decode error: {0}")]
    Decode(String),

    #[error("no knee found: difference curve has no qualifying maximum")]
    NoKnee,

    #[error("query matched no eligible index rows")]
    EmptyResult,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code the CLI maps this error to: 1 for validation-class
    /// problems (bad input data, bad arguments), 2 for I/O and runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::Shape(_)
            | Error::Domain(_)
            | Error::Usage(_)
            | Error::Config(_)
            | Error::NoKnee
            | Error::EmptyResult => 1,
            Error::Io { .. }
            | Error::TensorFormat { .. }
            | Error::TensorCorrupt { .. }
            | Error::Range(_)
            | Error::Inference(_)
            | Error::Decode(_) => 2,
        }
    }
}
