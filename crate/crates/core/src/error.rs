use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its documented constraint.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown keys in {section}: {}", keys.join(", "))]
    UnknownKeys { section: String, keys: Vec<String> },

    #[error("missing required keys for `{schema}` schema: {}", keys.join(", "))]
    MissingKeys { schema: String, keys: Vec<String> },

    /// A strategy released a block before its slot started.
    #[error("slot {slot}: release time {release_time_us} us precedes slot start {slot_start_us} us")]
    EarlyRelease {
        slot: u64,
        release_time_us: i64,
        slot_start_us: i64,
    },

    /// An attester voted before the block could have reached it.
    #[error("slot {slot}, attester {attester}: vote released at {release_time_us} us before block arrival at {arrival_us} us")]
    VoteBeforeArrival {
        slot: u64,
        attester: usize,
        release_time_us: i64,
        arrival_us: i64,
    },

    #[error("slot {slot}: canonical status is unresolved")]
    Unresolved { slot: u64 },

    #[error("not a deviation: {0}")]
    NotADeviation(String),

    #[error("grid is empty")]
    EmptyGrid,

    #[error("grid value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: i64, lo: i64, hi: i64 },

    #[error("no finite release delay reaches a vote threshold of 1")]
    UnreachableThreshold,

    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
