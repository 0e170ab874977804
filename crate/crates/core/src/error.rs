use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("duplicate task id {0}")]
    DuplicateTask(i64),
    #[error("task {id} has non-positive or non-finite work {work}")]
    InvalidWork { id: i64, work: f64 },
    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: i64, dst: i64 },
    #[error("edge {src} -> {dst} is a self loop")]
    SelfLoop { src: i64, dst: i64 },
    #[error("edge {src} -> {dst} references an unknown task")]
    DanglingEdge { src: i64, dst: i64 },
    #[error("edge {src} -> {dst} has negative or non-finite data {data}")]
    InvalidData { src: i64, dst: i64, data: f64 },
    #[error("cycle detected through task {0}")]
    Cycle(i64),

    #[error("invalid cluster: {0}")]
    InvalidCluster(String),
    #[error("invalid power profile: {0}")]
    InvalidProfile(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("schedule does not match the instance: {0}")]
    ScheduleMismatch(String),

    #[error("profile horizon exceeded: integration end {end} > horizon {horizon}")]
    HorizonExceeded { end: f64, horizon: f64 },

    #[error("infeasible deadline {deadline}: the unrestricted fallback schedule has makespan {fallback_makespan}")]
    InfeasibleDeadline { deadline: f64, fallback_makespan: f64 },
    #[error("internal invariant breached: {0}")]
    InvariantBreach(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("too many items for exhaustive search: {0} (limit {1})")]
    TooManyItems(usize, usize),
    #[error("instance too large for brute force: {0}")]
    InstanceTooLarge(String),

    #[error("intensity series has {len} values but {needed} intervals are needed")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("integers sum to {sum}, expected n*B = {expected}")]
    SumMismatch { sum: u64, expected: u64 },

    #[error("deadline factor alpha must be > 1, got {0}")]
    InvalidAlpha(f64),
    #[error("missing result pairing: {0}")]
    MissingPairing(String),
    #[error("no results to aggregate")]
    EmptyResults,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
