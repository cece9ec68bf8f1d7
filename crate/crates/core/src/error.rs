use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus must be at least 2, got {0}")]
    InvalidModulus(u64),
    #[error("{0} is not an odd prime")]
    NotOddPrime(String),
    #[error("index {index} has the wrong parity for this identity (expected {expected})")]
    WrongParity { index: u64, expected: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("factorization of {value} is incomplete (unfactored cofactor {cofactor})")]
    IncompleteFactorization { value: BigUint, cofactor: BigUint },
    #[error("divisor count {count} exceeds the cap {cap}")]
    TooManyDivisors { count: BigUint, cap: u64 },
    #[error("period search modulo {modulus} exceeded {cap} steps")]
    PeriodCapExceeded { modulus: u64, cap: u128 },
    #[error("certified comparison still undecided at {bits} bits")]
    PrecisionCapExceeded { bits: u32 },
    #[error("malformed factor cache line {line}: {reason}")]
    CacheFormat { line: usize, reason: String },
    #[error("internal consistency check failed: {0}")]
    Invariant(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
