use thiserror::Error;

/// Failure modes shared across the crate. `Input` and `Construction` mean the
/// caller handed us something unusable; `InsufficientData` means a run was too
/// short to estimate what was asked; `Internal` means an invariant the code
/// relies on was violated (broken RNG, singular solve, residual blow-up).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("insufficient data at horizon {horizon}: {context}")]
    InsufficientData { context: String, horizon: u64 },

    #[error("observer failed at step {step}: {message}")]
    Observer { step: u64, message: String },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn construction(msg: impl Into<String>) -> Self {
        Error::Construction(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
