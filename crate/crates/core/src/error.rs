use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("schema violation in {location}: {message}")]
    SchemaViolation { location: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("empty input")]
    EmptyInput,

    #[error("out-of-order event: expected index {expected}, got {got}")]
    OutOfOrderEvent { expected: usize, got: usize },

    #[error("trace {0} carries no hidden vectors")]
    MissingHidden(String),

    #[error("trace {0} is labeled as a loop but has no onset")]
    MissingOnsetLabel(String),

    #[error("only one class present ({0})")]
    SingleClass(&'static str),

    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),

    #[error("non-finite score {0} fed to the monitor")]
    NonFiniteScore(f64),

    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    #[error("requested signal {0} is absent from the trace")]
    SignalAbsent(&'static str),

    #[error("series too short: need more than {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("no loop to analyze: {0}")]
    NoLoop(String),

    #[error("evaluation needs at least one {0} case")]
    EmptyClass(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaViolation {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::MissingFile(_))
    }
}
