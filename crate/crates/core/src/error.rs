use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("duplicate frequency x = {x} on line {line}")]
    DuplicateFrequency { x: u64, line: usize },

    #[error("no classes observed (n = 0)")]
    Empty,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `x!` is not representable in `f64` for `x > 170`.
    #[error("factorial of {0} overflows f64")]
    FactorialOverflow(u64),

    /// The Hankel matrix of order `requested` is not positive definite; the
    /// ladder stops at `largest_valid` (0 when even the first fails).
    #[error("lower-bound ladder ends before k = {requested} (largest valid k = {largest_valid})")]
    LadderEnds { requested: usize, largest_valid: usize },

    #[error("estimate undefined: {0}")]
    Undefined(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("linear program is infeasible")]
    Infeasible,
}
