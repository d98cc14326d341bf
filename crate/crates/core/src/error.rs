use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbVec(&'static str),

    /// `KL(p||q)` with `q_i = 0 < p_i`; the divergence is `+inf`.
    #[error("infinite divergence at index {index}")]
    InfiniteDivergence { index: usize },

    #[error("domain error: {0}")]
    Domain(&'static str),

    #[error("operation requires a {required} distribution")]
    UnsupportedKind { required: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(&'static str),

    /// The model puts more mass on the data label than the data conditional does.
    #[error("sign assumption violated at x = {x}")]
    Assumption { x: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
