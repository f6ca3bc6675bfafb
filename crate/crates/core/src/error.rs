use thiserror::Error;

/// Errors raised by the algebra kernel and the constructions built on it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("generator `{0}` is declared twice")]
    DuplicateGenerator(String),
    #[error("element refers to generator index {0}, which this algebra does not have")]
    MismatchedAlgebra(usize),
    #[error("generator `{0}` is outside the derivation's domain")]
    OutsideDomain(String),
    #[error("degree mismatch: {0}")]
    Degree(String),
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("basis is infinite: {0}")]
    InfiniteBasis(String),
    #[error("differential does not square to zero on `{0}`")]
    NotSquareZero(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
