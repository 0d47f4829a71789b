use thiserror::Error;

/// Errors raised by graph construction, the differentiation tape, and training.
#[derive(Debug, Error)]
pub enum LohaError {
    /// Malformed or inconsistent input data (files, label vectors, edge lists).
    #[error("input error: {0}")]
    Input(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// An operation was called on data that does not satisfy its precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    /// NaN or infinity produced (or a value outside a function's domain).
    #[error("numeric error in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LohaError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        LohaError::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        LohaError::Numeric {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LohaError>;
