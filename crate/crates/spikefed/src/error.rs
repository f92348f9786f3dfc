//! Error type shared by the simulation core.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the simulation core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix dimension did not match what the operation expects.
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A hyperparameter or configuration value is outside its valid range.
    Config(String),
    /// An operation received an empty input it cannot handle.
    Empty(&'static str),
    /// A sparse index points outside the dense dimension.
    IndexOutOfRange { index: u32, dim: u32 },
    /// A binary payload was shorter than its header claims.
    Truncated(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                what,
                expected,
                got,
            } => write!(f, "shape mismatch in {what}: expected {expected}, got {got}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::IndexOutOfRange { index, dim } => {
                write!(f, "sparse index {index} out of range for dimension {dim}")
            }
            Error::Truncated(what) => write!(f, "truncated payload: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
