use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    Shape { op: &'static str, detail: String },
    /// An operation produced or received NaN/Inf.
    NonFinite { op: &'static str },
    /// `backward` was called on a tensor with more than one element.
    NotScalar { shape: Vec<usize> },
    /// A tape node references a node that does not precede it.
    Cycle { node: usize },
    /// An argument is outside its admissible range.
    InvalidArgument(String),
    /// A required collection was empty.
    Empty(&'static str),
    /// Input data failed validation.
    Data(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape mismatch in {op}: {detail}"),
            Error::NonFinite { op } => write!(f, "non-finite value in {op}"),
            Error::NotScalar { shape } => write!(f, "expected a scalar loss, got shape {shape:?}"),
            Error::Cycle { node } => write!(f, "tape node {node} references a later node"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::Data(msg) => write!(f, "invalid data: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}
