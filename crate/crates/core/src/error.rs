use thiserror::Error;

/// Errors raised by the overlap-detection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    ModelInvalid(String),

    #[error("divergence undefined: {0}")]
    DivergenceUndefined(String),

    #[error("exponent undefined: {0}")]
    ExponentUndefined(String),

    #[error("bound undefined: {0}")]
    BoundUndefined(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
