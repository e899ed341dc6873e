use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular transform (|det| = {det:e})")]
    SingularTransform { det: f64 },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("empty labeled set")]
    EmptyLabeledSet,
}

impl Error {
    /// Stable machine-readable kind, used by the CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::SingularTransform { .. } => "singular-transform",
            Error::Numeric(_) => "numeric",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::EmptyLabeledSet => "empty-labeled-set",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;

macro_rules! mismatch {
    ($($arg:tt)*) => {
        $crate::error::Error::DimensionMismatch(alloc::format!($($arg)*))
    };
}
pub(crate) use mismatch;
