use thiserror::Error;

/// Errors raised by the simulation and evaluation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point lies outside the fundamental box of its domain.
    #[error("point {point:?} lies outside the domain box [0, {side})^{dim}")]
    OutsideDomain {
        point: Vec<f64>,
        side: f64,
        dim: usize,
    },

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A formula was evaluated outside the parameter range where it is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested configuration has no implementation.
    #[error("not supported: {0}")]
    NotSupported(String),

    /// A computed value became non-finite or a field lost positive definiteness.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A path was too short for the requested query.
    #[error("range error: {0}")]
    Range(String),

    /// Too many values for exhaustive subset enumeration.
    #[error("size error: {len} values exceed the enumeration limit of {limit}")]
    Size { len: usize, limit: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
