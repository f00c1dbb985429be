//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two matrices or vectors do not conform.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A sample's latent scores are all nonpositive, or a composition lost
    /// all of its mass; there is no valid multinomial parameter.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// Invalid parameter or configuration value.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A text input failed to parse. `line` is 1-based and 0 means the
    /// failure is not tied to a specific line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input data is structurally valid but inconsistent with the request.
    #[error("data error: {0}")]
    Data(String),

    /// The slice sampler could not bracket its level set.
    #[error(
        "slice sampler exceeded {max_steps} expansion steps \
         (target {target}, start {start}, width {width})"
    )]
    SliceExceeded {
        target: String,
        start: f64,
        width: f64,
        max_steps: usize,
    },

    /// Non-finite value where a finite one is required.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A permutation refit failed; completed null statistics are preserved.
    #[error("permutation test aborted after {} completed refits: {message}", completed.len())]
    PermutationAborted {
        completed: Vec<f64>,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateSample(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
