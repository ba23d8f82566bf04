use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid phase clock: step duration {0} must be positive")]
    InvalidClock(f64),
    #[error("time {t} precedes the start of the current step ({t_minus})")]
    TimeBeforeStep { t: f64, t_minus: f64 },
    #[error("phase {0} outside [0, 1]")]
    PhaseOutOfDomain(f64),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("output layout mismatch: expected {expected} channels, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("desired velocity ({0}, {1}) outside the supported range of 1.5 m/s per axis")]
    VelocityOutOfRange(f64, f64),
    #[error("invalid network size: {0}")]
    InvalidSize(String),
    #[error("channel index {index} out of range for {dim} outputs")]
    BadChannel { index: usize, dim: usize },
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("numeric divergence at tick {tick} (t = {t} s)")]
    Divergence { tick: u64, t: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
