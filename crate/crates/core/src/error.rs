use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("division by near-zero denominator {value:e} at element {index}")]
    NearZeroDenominator { index: usize, value: f64 },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("unsupported derivative order {0} (expected 1 or 2)")]
    BadOrder(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },
    #[error("non-finite output at sample {sample} in {layer}")]
    NonFinite { layer: &'static str, sample: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
