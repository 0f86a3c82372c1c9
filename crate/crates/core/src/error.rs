use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters outside the regime where a method is valid.
    #[error("regime error: {0}")]
    Regime(String),

    /// A numerical routine could not reach its tolerance.
    #[error("accuracy error in {what}: achieved error estimate {achieved:e}")]
    Accuracy { what: String, achieved: f64 },

    /// Two routes that must agree did not.
    #[error("consistency error in {what}: discrepancy {discrepancy:e}")]
    Consistency { what: String, discrepancy: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Regime(_) => 1,
            Error::Accuracy { .. } | Error::Consistency { .. } => 2,
            Error::Internal(_) | Error::Io(_) | Error::Json(_) => 3,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn regime(msg: impl Into<String>) -> Self {
        Error::Regime(msg.into())
    }
}
