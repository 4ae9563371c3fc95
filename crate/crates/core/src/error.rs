use thiserror::Error;

/// Errors raised by the numerical core and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A point lies outside the domain of a mirror map (or its dual).
    #[error("domain violation: {0}")]
    Domain(String),

    /// An iterative or quadrature routine failed to reach its tolerance.
    #[error("numerical failure in {routine}: {detail} (residual {residual:e})")]
    Numerical {
        routine: &'static str,
        detail: String,
        residual: f64,
    },

    /// Inputs that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Experiment configuration that does not validate.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn numerical(routine: &'static str, detail: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            routine,
            detail: detail.into(),
            residual,
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Config(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
