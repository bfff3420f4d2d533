//! Deterministic discrete-event simulation of an HPC batch scheduler.
//!
//! The simulator replays a workload — parsed from standard workload
//! format (SWF) traces or generated synthetically — against a cluster of
//! identical multi-core nodes and schedules it with conservative (or
//! EASY) backfilling. On top of the rigid baseline it implements a
//! slowdown-driven co-scheduling policy: when a malleable job cannot
//! start immediately, the scheduler may carve cores out of running
//! malleable jobs ("mates") and start the newcomer on borrowed capacity,
//! provided the predicted slowdown of every donor stays within a cutoff
//! and the move helps the newcomer beat its own static-start estimate.
//!
//! Everything is integer-timed and iteration order is fixed, so a given
//! workload, configuration, and seed always produce a byte-identical
//! event log. Runs over several configurations can execute in parallel
//! (the `parallel` feature, on by default) without affecting results.
//!
//! Crate layout:
//!
//! * [`workload`]: jobs, SWF parsing/writing, synthetic generation.
//! * [`cluster`]: node state, core ownership, invariant checks.
//! * [`runtime_model`]: progress accounting for resized jobs.
//! * [`selection`]: choosing donor mates under the slowdown cutoff.
//! * [`nodemgr`]: applying start/end/resize plans to the cluster.
//! * [`scheduler`]: backfill passes and the co-scheduling decision.
//! * [`engine`]: the event loop tying it together.
//! * [`eventlog`] / [`metrics`]: the run record and numbers from it.
//! * [`batch`]: many-configuration runs and policy comparisons.

pub mod batch;
pub mod cluster;
pub mod engine;
pub mod error;
pub mod eventlog;
pub mod metrics;
pub mod nodemgr;
pub mod runtime_model;
pub mod scheduler;
pub mod selection;
pub mod workload;

pub use batch::{compare, run_batch, run_batch_seq, Comparison, ComparisonSummary};
pub use cluster::{ClusterConfig, NodeId};
pub use engine::{run, EngineStats, RunOutput, SdTally, SimConfig};
pub use error::{Result, SimError};
pub use eventlog::EventLog;
pub use metrics::{
    heatmap, heatmap_ratio, summarize, summarize_with, Heatmap, HeatmapSpec, MetricsOptions,
    SimReport,
};
pub use nodemgr::SharingFactor;
pub use runtime_model::RuntimeModel;
pub use scheduler::Policy;
pub use selection::CutoffPolicy;
pub use workload::{gen_synthetic, parse_swf, Job, JobId, SynthParams, Workload};
