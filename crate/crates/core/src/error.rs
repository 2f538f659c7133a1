use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor or image dimensions do not line up.
    Shape(String),
    /// A value is outside its legal domain (negative sigma, bad ratio, ...).
    InvalidArgument(String),
    /// A forward op produced NaN or infinity from finite input.
    NonFinite(&'static str),
    /// Image contains no foreground after thresholding.
    NoForeground,
    /// A ROI projects entirely outside the feature map.
    RoiOutside,
    /// Annotation label outside {benign, malignant}.
    UnknownLabel(String),
    /// Checkpoint bytes are malformed.
    Checkpoint(String),
    /// Model parameters are missing or inconsistent.
    Params(String),
    EmptyDataset,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape mismatch: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::NonFinite(op) => write!(f, "non-finite value produced by {op}"),
            Error::NoForeground => write!(f, "no foreground"),
            Error::RoiOutside => write!(f, "roi lies fully outside the feature map"),
            Error::UnknownLabel(l) => write!(f, "unknown label {l:?} (expected benign or malignant)"),
            Error::Checkpoint(m) => write!(f, "bad checkpoint: {m}"),
            Error::Params(m) => write!(f, "bad model parameters: {m}"),
            Error::EmptyDataset => write!(f, "empty dataset"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(alloc::format!($($arg)*)) };
}
macro_rules! arg_err {
    ($($arg:tt)*) => { $crate::error::Error::InvalidArgument(alloc::format!($($arg)*)) };
}
pub(crate) use {arg_err, shape_err};
