use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("atoms {separation:.4} µm apart at t = {time:.6} µs, below the {guard} µm guard")]
    Geometry {
        separation: f64,
        guard: f64,
        time: f64,
    },

    #[error("non-finite state at t = {time:.6} µs: {what}")]
    NonFinite { time: f64, what: String },

    #[error("overlap modulus {0:e} too small for a phase to be defined")]
    DegenerateOverlap(f64),

    #[error("propagator is not unitary (‖U†U − I‖ = {0:e})")]
    NotUnitary(f64),

    #[error("state has weight {0:e} outside the product embedding")]
    Factorization(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("artifact mismatch: {0}")]
    Artifact(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Process exit status for the failure class: config 2, numeric 3, I/O 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Io { .. } | Error::Json { .. } | Error::Artifact(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
