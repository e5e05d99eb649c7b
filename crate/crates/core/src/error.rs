use thiserror::Error;

/// Errors shared across the descent engine.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{0} is not squarefree")]
    NotSquarefree(i128),
    #[error("modulus {0} is not an odd prime")]
    InvalidModulus(i128),
    #[error("p-adic valuation at {p} is odd, symbol undefined")]
    OddValuation { p: u64 },
    #[error("zero input where a nonzero value is required")]
    ZeroInput,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("F2 dimensions above {0} are not supported")]
    DimensionTooLarge(usize),
    #[error("affine solution space larger than 2^16")]
    TooManySolutions,
    #[error("computed Selmer candidate set is not a subgroup: {0}")]
    NotSubgroup(String),
    #[error("local solvability undecided at p={p} within precision cap {cap}")]
    PrecisionExhausted { p: u64, cap: u32 },
    #[error("no integer point on the quadric found within the search box for d={d}")]
    SearchExhausted { d: i128 },
    #[error("hypotheses violated: {0}")]
    HypothesisViolated(String),
    #[error("Selmer count quotient is not integral")]
    NonIntegralQuotient,
    #[error("parity trim would drop the image Selmer dimension below 2")]
    ParityUnresolvable,
    #[error("search limit {0} exceeded")]
    LimitExceeded(u64),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("arithmetic overflow in 128-bit computation")]
    Overflow,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
