use thiserror::Error;

/// Errors reported by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TphdError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value {value} outside domain [0, {bound})")]
    Domain { value: u64, bound: u64 },
    #[error("possible 64-bit overflow: {0}")]
    Overflow(String),
    #[error("{0} is not prime")]
    InvalidModulus(u64),
    #[error("no prime in [{lo}, {hi}]")]
    PrimeNotFound { lo: u64, hi: u64 },
    #[error("promise violated at index {index}")]
    PromiseViolated { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("instance outside the supported regime: {0}")]
    OutOfRegime(String),
    #[error("work budget of {budget} units exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("gave up after {attempts} attempts: {reason}")]
    RetriesExhausted { attempts: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, TphdError>;
