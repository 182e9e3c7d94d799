use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand extents do not line up.
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// A sequence is shorter than the kernel or window that must fit inside it.
    TooShort {
        op: &'static str,
        len: usize,
        required: usize,
    },
    /// NaN or Inf produced somewhere in the forward/backward pass.
    NonFinite(String),
    InvalidConfig(String),
    EmptyInput(&'static str),
    LabelOutOfRange {
        label: usize,
        classes: usize,
    },
    /// A split was used in a way that would leak evaluation data into fitting.
    Leakage(String),
    /// Calibration data does not cover every class.
    MissingClass {
        class: usize,
    },
    DuplicateSubject(u32),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, expected, got } => {
                write!(f, "{op}: shape mismatch, expected {expected:?}, got {got:?}")
            }
            Error::TooShort { op, len, required } => {
                write!(f, "{op}: length {len} is shorter than required {required}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::Leakage(msg) => write!(f, "data leakage: {msg}"),
            Error::MissingClass { class } => {
                write!(f, "calibration data has no segments for class {class}")
            }
            Error::DuplicateSubject(id) => write!(f, "duplicate subject id {id}"),
        }
    }
}

impl core::error::Error for Error {}
