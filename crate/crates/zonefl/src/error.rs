use crate::topology::ZoneId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty dataset: {context}")]
    EmptyDataset { context: &'static str },

    #[error("unknown or inactive zone {0}")]
    UnknownZone(ZoneId),

    #[error("zones {0} and {1} are not adjacent; merge rejected")]
    MergeRejected(ZoneId, ZoneId),

    #[error("split rejected: {candidate} is not a proper sub-zone of {zone}")]
    SplitRejected { zone: ZoneId, candidate: ZoneId },

    #[error("aggregation over an empty gradient list")]
    EmptyAggregation,

    #[error("gradient shape mismatch during aggregation")]
    ShapeMismatch,

    #[error("non-finite values produced in {context}")]
    NumericFailure { context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
