use thiserror::Error;

/// Errors produced while loading workloads, configuring a simulation, or
/// running one to completion.
#[derive(Error, Debug)]
pub enum SimError {
    #[error("workload parse error at line {line}: {reason}")]
    WorkloadParse { line: usize, reason: String },
    #[error("workload is empty after filtering")]
    EmptyWorkload,
    #[error("job {job} requests {requested} nodes but the cluster has {available}")]
    JobTooLarge {
        job: u64,
        requested: u32,
        available: u32,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invariant violated at t={time}: {reason}")]
    InvariantViolation { time: u64, reason: String },
    #[error("event log is incomplete: {0}")]
    IncompleteLog(String),
    #[error("heatmap shapes differ: {0}")]
    HeatmapMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
