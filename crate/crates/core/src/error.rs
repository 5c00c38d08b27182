use thiserror::Error;

/// Errors raised by the forward, backward and solver passes, and by the
/// analytic reference solutions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(
        "a second collision (manifold {second}) is predicted inside the residual of step {step} \
         after manifold {first} fired; collisions must be isolated, increase N"
    )]
    IsolationViolation {
        step: usize,
        first: usize,
        second: usize,
    },

    #[error(
        "transversality lost at collision step {step}: |psi_x f| = {value:e} is below the guard"
    )]
    TransversalityLost { step: usize, value: f64 },

    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite {
        quantity: &'static str,
        iteration: usize,
    },

    #[error("exclusion windows cover the whole horizon")]
    DegenerateWindow,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no interior minimum of the reduced objective in (0, T)")]
    NoInteriorMinimum,

    #[error("disc 2 does not reach the wall before the horizon")]
    WallNotReached,

    #[error("no analytic reference solution for {0}")]
    OracleUnavailable(String),

    #[error("iteration {iteration}: {inner}")]
    AtIteration { iteration: usize, inner: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::NonFinite { .. } => e,
            e => Error::AtIteration {
                iteration,
                inner: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { inner, .. } => inner.root(),
            e => e,
        }
    }
}
