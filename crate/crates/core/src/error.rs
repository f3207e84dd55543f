use thiserror::Error;

/// Errors raised by policy evaluation, target construction, solving and
/// session execution.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index out of range: {what} = {index}, limit {limit}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distribution not normalized: sum = {sum}")]
    NotNormalized { sum: f64 },

    #[error("degenerate gradient (norm zero)")]
    DegenerateGradient,

    #[error("operator failed adjoint probe: <Jv,s> = {forward}, <v,J^T s> = {adjoint}")]
    AdjointMismatch { forward: f64, adjoint: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infinite divergence: p > 0 where q = 0 at index {index}")]
    InfiniteDivergence { index: usize },

    #[error("feedback aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn ensure_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

pub(crate) fn ensure_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index >= limit {
        return Err(Error::OutOfRange { what, index, limit });
    }
    Ok(())
}
