use thiserror::Error;

/// Errors raised by the multiscale pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    #[error("singular system `{system}` (condition estimate {estimate:.3e})")]
    Singular { system: String, estimate: f64 },

    #[error("solve of `{system}` did not converge: backward error {residual:.3e}")]
    Residual { system: String, residual: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("incompatible source: {0}")]
    IncompatibleSource(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
