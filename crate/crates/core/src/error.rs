use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, WalkError>;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("{what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("duplicate vertex `{0}`")]
    DuplicateVertex(String),

    #[error("vertex `{0}` has a self-loop jump operator")]
    SelfLoop(String),

    #[error("vertex `{0}` has dimension 0")]
    EmptySpace(String),

    #[error("recovered Hamiltonian at vertex `{vertex}` is not Hermitian (residual {residual:.3e})")]
    NonHermitian { vertex: String, residual: f64 },

    #[error("invalid rate matrix: {0}")]
    InvalidGenerator(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("state fully decayed (survival {0:.3e})")]
    Decayed(f64),

    #[error("total jump rate is zero at vertex `{0}`")]
    ZeroRate(String),

    #[error("vertex `{vertex}` is not escaping: eigenvalue {eigenvalue} of its effective operator is on or right of the stability margin")]
    NonEscaping { vertex: String, eigenvalue: Complex64 },

    #[error("no jump operator from `{from}` to `{to}`")]
    MissingJump { from: String, to: String },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("{what} did not converge after {iterations} iterations (last increment {last_increment:.3e})")]
    NotConverged {
        what: String,
        iterations: usize,
        last_increment: f64,
    },

    #[error("{what} needs {needed} evaluations, above the budget of {limit}")]
    BudgetExceeded {
        what: String,
        needed: u128,
        limit: u128,
    },

    #[error("trajectory exceeded the jump-count limit of {0}")]
    CircuitBreaker(u64),

    #[error("walk is reducible; classification requires an irreducible walk")]
    Reducible,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Coarse failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Validation,
    NonConvergence,
    Precondition,
}

impl WalkError {
    pub fn class(&self) -> ErrorClass {
        use WalkError::*;
        match self {
            Parse(_) => ErrorClass::Parse,
            DimensionMismatch { .. }
            | UnknownVertex(_)
            | DuplicateVertex(_)
            | SelfLoop(_)
            | EmptySpace(_)
            | NonHermitian { .. }
            | InvalidGenerator(_)
            | InvalidState(_) => ErrorClass::Validation,
            NotConverged { .. } | CircuitBreaker(_) | BudgetExceeded { .. } => {
                ErrorClass::NonConvergence
            }
            NegativeTime(_)
            | Decayed(_)
            | ZeroRate(_)
            | NonEscaping { .. }
            | MissingJump { .. }
            | InvalidPath(_)
            | Reducible
            | InvalidArgument(_) => ErrorClass::Precondition,
        }
    }
}
