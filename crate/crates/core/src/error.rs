use thiserror::Error;

/// Errors raised by the library. Audit failures are reported in reports, not here.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlcError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("field mismatch: GF({0}) vs GF({1})")]
    FieldMismatch(u64, u64),
    #[error("division by zero in GF({0})")]
    DivisionByZero(u64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not full row rank")]
    NotFullRowRank,
    #[error("vector is not in the row space")]
    NotInRowSpace,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("out of scope: {0}")]
    OutOfScope(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("malformed query: {0}")]
    MalformedQuery(String),
    #[error("corrupted transcript: {0}")]
    CorruptTranscript(String),
}

pub type Result<T> = std::result::Result<T, PlcError>;
