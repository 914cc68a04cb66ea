use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants split into two families that the command line maps onto
/// distinct exit codes: caller mistakes (shape, spec, validation, domain,
/// parse, usage, evaluation) and failures that happen while running
/// (training, io).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {}x{}, right is {}x{}", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("training error: {0}")]
    Training(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input or configuration rather than a
    /// failure during execution.
    pub fn is_caller_error(&self) -> bool {
        !matches!(self, Error::Training(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
