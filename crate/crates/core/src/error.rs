use thiserror::Error;

/// Errors raised by the calculators and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no finite solution: {0}")]
    NoSolution(String),

    #[error("root bracket could not be established: {0}")]
    Bracket(String),

    #[error("bisection did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("sequence length mismatch: transmitted {transmitted}, alice {alice}")]
    LengthMismatch { transmitted: usize, alice: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (bracketing, convergence,
    /// missing roots) as opposed to rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoSolution(_) | Error::Bracket(_) | Error::NoConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
