use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar input lies outside its admissible domain.
    #[error("input out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A window or index falls outside the data it addresses.
    #[error("out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("non-finite phase at step {step}")]
    Numerical { step: usize },

    #[error("no locking transition in bracket [{lo}, {hi}] rad/ns")]
    Bracket { lo: f64, hi: f64 },

    #[error("parse error in {origin}: {msg}")]
    Parse { origin: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(origin: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            msg: msg.into(),
        }
    }
}
