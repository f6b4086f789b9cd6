use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: matrix has {rows} rows but right-hand side has length {rhs}")]
    DimensionMismatch { rows: usize, rhs: usize },

    #[error("invalid degree: need 1 <= d <= m, got m = {m}, d = {d}")]
    InvalidDegree { m: usize, d: usize },

    #[error("polynomials belong to different bases")]
    BasisMismatch,

    #[error("{what} = {value} exceeds the configured cap of {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
