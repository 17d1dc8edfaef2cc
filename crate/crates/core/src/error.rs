use thiserror::Error;

/// Errors raised by the estimators, cost models and detectors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("constant burn-in: inter-quartile range is zero")]
    ConstantBurnIn,

    #[error("constant series: inter-quartile range is zero")]
    ConstantSeries,

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("segment too short for variance: length {0} < 2")]
    SegmentTooShort(usize),

    #[error("collective penalty undefined for segment length {0} < 2")]
    PenaltyLength(usize),

    #[error("non-finite observation: {0}")]
    NonFinite(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series of length {len} exceeds the brute-force limit of {limit}")]
    SeriesTooLong { len: usize, limit: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
