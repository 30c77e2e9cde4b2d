use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("profile is not monotone: {0}")]
    NonMonotone(String),

    #[error("step-size constraint violated: {0}")]
    StepSize(String),

    #[error("non-finite state at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("front reached the domain boundary; try a domain of at least [{suggested_min}, {suggested_max}]")]
    DomainTooSmall {
        suggested_min: f64,
        suggested_max: f64,
    },

    #[error("order violation {violation:e} exceeds {tolerance:e}: {context}")]
    OrderViolation {
        violation: f64,
        tolerance: f64,
        context: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
