use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("invalid configuration at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("line search exceeded {cap} loops")]
    LineSearchFailure { cap: u64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no sign change on bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
