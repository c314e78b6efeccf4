use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {context}: achieved relative error {achieved:.3e}")]
    NumericFailure { context: String, achieved: f64 },

    #[error("level {level} is not bracketed by the shrinkage weight range [{low}, {high}]")]
    NoCrossing { level: f64, low: f64, high: f64 },

    #[error("degenerate regime: {0}")]
    DegenerateRegime(String),

    #[error("asymptotic quantities require the limit constant C, which is not attached")]
    MissingLimit,

    #[error("missing parameter: {0}")]
    MissingParameter(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(context: impl Into<String>, achieved: f64) -> Self {
        Error::NumericFailure {
            context: context.into(),
            achieved,
        }
    }

    /// True for failures that come from numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericFailure { .. }
                | Error::NoCrossing { .. }
                | Error::DegeneratePosterior(_)
                | Error::DegenerateRegime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
