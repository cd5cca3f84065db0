use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("column `{column}` row {row}: value `{value}` is not binary after coding")]
    NonBinary {
        column: String,
        row: usize,
        value: String,
    },

    #[error("column `{column}`: category `{value}` has no entry in collapse_map")]
    UnmappedCategory { column: String, value: String },

    #[error("column `{column}` row {row}: value `{value}` is not numeric")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no stratum contains both treatment levels; scenario would be empty")]
    EmptyScenario,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("treatment arm x={arm} is empty")]
    EmptyArm { arm: u8 },

    #[error("fitted propensity {propensity} is exactly 0 or 1; weight would be infinite")]
    InfiniteWeight { propensity: f64 },

    #[error("weighted normal equations are singular ({diagnostic})")]
    SingularDesign { diagnostic: String },

    #[error("feature matrix has {got} columns, model was fitted on {expected}")]
    ColumnMismatch { expected: usize, got: usize },

    #[error("feature row {row:?} was not seen at fit time")]
    UnseenPattern { row: Vec<f64> },

    #[error("empty training data")]
    EmptyData,

    #[error("model fit failed in arm x={arm}: {source}")]
    ArmFit {
        arm: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("could not connect to {endpoint}: {message}")]
    Connection { endpoint: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("server reported: {0}")]
    Server(String),

    #[error("bootstrap gave up after {redraws} redraws (limit {limit}); last failure: {last}")]
    RedrawsExhausted {
        redraws: usize,
        limit: usize,
        last: String,
    },

    #[error("no results to aggregate")]
    EmptyResults,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Failures a bootstrap resample may hit by bad luck of the draw. These are
    /// discarded and redrawn; anything else aborts the interval.
    pub fn is_resample_failure(&self) -> bool {
        match self {
            Error::EmptyArm { .. }
            | Error::InfiniteWeight { .. }
            | Error::SingularDesign { .. }
            | Error::EmptyData
            | Error::Server(_) => true,
            Error::ArmFit { source, .. } => source.is_resample_failure(),
            _ => false,
        }
    }
}
