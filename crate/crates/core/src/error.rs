//! Error type shared by all core modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: duplicate observation for community {community} at step {tau}")]
    DuplicateObservation {
        line: usize,
        community: u32,
        tau: u64,
    },

    #[error("unknown weather label '{label}' (configured: {known})")]
    UnknownWeather { label: String, known: String },

    #[error("timestamp {timestamp}s outside horizon [0, {horizon}s]")]
    TimestampOutOfHorizon { timestamp: f64, horizon: f64 },

    #[error("segment is empty")]
    EmptySegment,

    #[error("need at least {need} training rows, got {got}")]
    TooFewRows { got: usize, need: usize },

    #[error("design matrix is rank-deficient or ill-conditioned at column '{column}': {detail}")]
    SingularDesign { column: String, detail: String },

    #[error("series too short: {got} samples, need at least {need}")]
    SeriesTooShort { got: usize, need: usize },

    #[error("degenerate series: sample variance is zero")]
    DegenerateSeries,

    #[error("history must hold exactly {need} values, got {got}")]
    HistoryLength { got: usize, need: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series ({got} steps) does not cover warmup + horizon ({need} steps)")]
    SeriesShorterThanHorizon { got: usize, need: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
