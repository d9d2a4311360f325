use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid network instance: {0}")]
    InvalidInstance(String),

    #[error("invalid matching: {0}")]
    InvalidMatching(String),

    #[error("invalid power profile: {0}")]
    InvalidPower(String),

    #[error("D2D pair {0} is not matched to any channel")]
    Unmatched(usize),

    #[error("bisection epsilon must be > 0 (got {0})")]
    InvalidEpsilon(f64),

    #[error("distance must be > 0 (got {0})")]
    NonPositiveDistance(f64),

    #[error("brute force over K^D = {channels}^{pairs} assignments exceeds the limit of {limit}")]
    InstanceTooLarge {
        channels: usize,
        pairs: usize,
        limit: u64,
    },

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instance file, line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
