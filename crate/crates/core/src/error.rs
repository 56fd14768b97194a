use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid point ({0}, {1})")]
    InvalidPoint(f64, f64),

    #[error("partition has no active cells")]
    EmptyPartition,

    #[error("flow specification: {0}")]
    FlowSpec(String),

    #[error("query ({x}, {y}, t={t}) lies outside the gridded field")]
    OutOfRange { x: f64, y: f64, t: f64 },

    #[error("trajectory {index} diverged (non-finite state)")]
    Diverged { index: usize },

    #[error("every row of the transition matrix is empty")]
    EmptyMatrix,

    #[error("empty selection: {0}")]
    EmptySelection(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular vectors did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is too small or rank deficient for a second singular triple: {0}")]
    RankDeficient(String),

    #[error("coherence ratio undefined: selected rows carry zero mass")]
    UndefinedRatio,

    #[error("no admissible split: {0}")]
    NoSplit(String),

    #[error("relative measure undefined: subset carries zero mass")]
    UndefinedMeasure,

    #[error("sampling advice: {0}")]
    Advice(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
