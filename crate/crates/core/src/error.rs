use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix had the wrong length.
    DimensionMismatch { expected: usize, found: usize },
    IndexOutOfRange { index: usize, len: usize },
    InvalidTopology(String),
    InvalidParameter(String),
    InvalidState(String),
    /// The adaptive step size collapsed; usually stiffness or blow-up.
    StepSizeUnderflow { tau: f64, step: f64 },
    /// The trajectory left the finite numbers.
    NonFinite { tau: f64 },
    SeriesTooShort { len: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::InvalidTopology(msg) => write!(f, "invalid topology: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::InvalidState(msg) => write!(f, "invalid state: {msg}"),
            Error::StepSizeUnderflow { tau, step } => {
                write!(f, "step size underflow (h = {step:e}) at tau = {tau}")
            }
            Error::NonFinite { tau } => write!(f, "trajectory became non-finite at tau = {tau}"),
            Error::SeriesTooShort { len } => {
                write!(f, "series of length {len} is too short (need at least 3 samples)")
            }
        }
    }
}

impl core::error::Error for Error {}
