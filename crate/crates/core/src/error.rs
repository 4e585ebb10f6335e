// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `location` names the line/column or field.
    #[error("format error in {what} at {location}: {message}")]
    Format {
        what: String,
        location: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate feature id `{0}`")]
    DuplicateId(String),

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("degenerate labels for `{feature}`: {message}")]
    DegenerateLabels { feature: String, message: String },

    #[error("not enough samples for `{feature}`: {got} < {required}")]
    InsufficientSamples {
        feature: String,
        got: usize,
        required: usize,
    },

    #[error("fit diverged for `{feature}` (non-finite loss); try a smaller learning_rate")]
    Divergence { feature: String },

    #[error("singular system for `{feature}`; use l2 > 0")]
    SingularSystem { feature: String },

    #[error("empty fit: no feature had enough usable samples")]
    EmptyFit,

    #[error("infeasible oracle world: {0}")]
    Infeasible(String),

    #[error("no fitted direction for mentioned feature `{0}`")]
    MissingDirection(String),

    #[error("value {value} for `{feature}` is not representable by the lexicon")]
    Unrepresentable { feature: String, value: f64 },

    #[error("unknown feature id `{0}`")]
    UnknownFeature(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(what: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Format {
            what: what.into(),
            location: format!("line {} column {}", err.line(), err.column()),
            message: err.to_string(),
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            got,
        }
    }
}
