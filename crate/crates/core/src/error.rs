use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the distillation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("least-squares system is too ill-conditioned (pivot {pivot:e} at column {column})")]
    Conditioning { column: usize, pivot: f64 },

    #[error("training diverged at iteration {iteration}: {what} is not finite")]
    Divergence { iteration: usize, what: &'static str },

    #[error("ODE integration produced a non-finite state at step {step}")]
    Integration { step: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures decoding one of the binary containers.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported container version {0}")]
    Version(u8),

    #[error("file truncated while reading {0}")]
    Truncated(&'static str),

    #[error("non-finite value in record {0}")]
    NonFinite(usize),

    #[error("malformed container: {0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
