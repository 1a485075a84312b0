use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain where an operation is defined.
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("mode index {0} is out of range (expected 1..=5)")]
    ModeOutOfRange(u8),

    /// Modes 4 and 5 (and any rotation with m != 2) only exist for m = 2.
    #[error("mode {mode} requires m = 2, got m = {m}")]
    RequiresQuadraticProfile { mode: u8, m: f64 },

    #[error("quadrature did not converge: error estimate {estimate:e} exceeds target {target:e} after {evaluations} evaluations")]
    Quadrature {
        estimate: f64,
        target: f64,
        evaluations: usize,
    },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("configuration error for key `{key}`: {message}")]
    Config { key: String, message: String },
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Quadrature { .. } | Error::IllConditioned(_))
    }
}
