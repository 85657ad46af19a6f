use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("malformed schedule: {0}")]
    Schedule(String),
    #[error("unsupported fragment: {0}")]
    Unsupported(String),
    #[error("desk-scale exceeded: {0}")]
    Limit(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("internal verification failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
