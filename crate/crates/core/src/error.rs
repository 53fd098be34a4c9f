use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested geometry or frequency combination has no physical solution.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The k grid is too coarse for the integrand phase at the requested point.
    #[error(
        "k grid under-resolved: phase step {max_step:.3} rad exceeds {limit:.3} rad; \
         at least {required_samples} samples needed"
    )]
    Resolution {
        max_step: f64,
        limit: f64,
        required_samples: usize,
    },

    #[error("fit failed: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
