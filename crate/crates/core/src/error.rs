use thiserror::Error;

#[derive(Debug, Error)]
pub enum GapError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numeric failure in {tensor}: {msg}")]
    Numeric { tensor: String, msg: String },
    #[error("no candidate: {0}")]
    NoCandidate(String),
    #[error("incompatible data: {0}")]
    Compat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GapError>;

impl GapError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        GapError::Argument(msg.into())
    }

    pub(crate) fn numeric(tensor: impl Into<String>, msg: impl Into<String>) -> Self {
        GapError::Numeric {
            tensor: tensor.into(),
            msg: msg.into(),
        }
    }
}
