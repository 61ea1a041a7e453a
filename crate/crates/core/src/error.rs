use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The observation does not carry enough information for the estimator.
    #[error("not estimable: {0}")]
    NotEstimable(String),

    /// Structural problem with an input file (missing header, strict-mode row error).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn not_estimable(msg: impl Into<String>) -> Self {
        Error::NotEstimable(msg.into())
    }
}
