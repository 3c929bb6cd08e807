use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("time grid must have at least one step")]
    EmptyGrid,

    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("non-finite value produced at node {node}")]
    NonFinite { node: usize },

    #[error(
        "{what} is not positive semidefinite at node {node} (min eigenvalue {min_eigenvalue:e})"
    )]
    PsdViolation {
        what: &'static str,
        node: usize,
        min_eigenvalue: f64,
    },

    #[error("{what} is singular at t = {t}")]
    Singular { what: &'static str, t: f64 },

    #[error("at least 2 paths are required, got {0}")]
    InsufficientPaths(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown field: {0}")]
    UnknownField(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        what: impl Into<String>,
        expected: (usize, usize),
        found: (usize, usize),
    ) -> Self {
        Error::ShapeMismatch {
            what: what.into(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }

    /// True for failures that indicate the numerics broke down rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::PsdViolation { .. } | Error::Singular { .. }
        )
    }
}
