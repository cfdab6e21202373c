use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("{0}")]
    Domain(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("no valid downlink symbols for decimation factor {0}")]
    EmptyDecimation(usize),

    #[error("frames are not consecutive: frame {prev} followed by {next}")]
    NonConsecutiveFrames { prev: u64, next: u64 },

    #[error("decimation plan J={0} is not uniform across frames; only K=1 is allowed")]
    NonUniformPlan(usize),

    #[error("all-zero input: {0}")]
    AllZero(&'static str),

    #[error("no static return above threshold")]
    NoStaticReturn,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
