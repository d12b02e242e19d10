use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid arguments or inconsistent inputs (dimension mismatch, wrong net, bad scale).
    #[error("usage error: {0}")]
    Usage(String),

    /// A Monte Carlo estimate did not reach its relative standard-error target.
    #[error(
        "accuracy error: Monte Carlo estimate {estimate:e} has standard error {std_error:e} (target relative {target:e})"
    )]
    MonteCarlo {
        estimate: f64,
        std_error: f64,
        target: f64,
    },

    /// A discretization parameter is too coarse for the requested accuracy.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
