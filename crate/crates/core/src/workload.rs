//! Workload loading and generation.
//!
//! Jobs come from one of two sources: Standard Workload Format (SWF) trace
//! files, or a seeded synthetic generator. Either way the result is a
//! [`Workload`]: jobs sorted by submit time, ready to be replayed.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Identifier of a job, unique within one workload.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One rigid or malleable batch job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    /// Arrival time, seconds from the start of the trace.
    pub submit: u64,
    /// Execution time at full allocation, seconds. Hidden from the scheduler.
    pub base_runtime: u64,
    /// User-provided runtime estimate, seconds. What the scheduler sees.
    pub requested_time: u64,
    /// Total processor count requested.
    pub requested_procs: u32,
    /// Node count derived from `requested_procs` and the node size.
    pub requested_nodes: u32,
    /// Process ranks pinned per node; a shrunk job keeps at least one core
    /// per rank.
    pub ranks_per_node: u32,
    /// Whether the job tolerates starting on a reduced allocation.
    pub malleable: bool,
}

impl Job {
    /// Total cores this job holds when every node is granted in full.
    pub fn full_cores(&self, cores_per_node: u32) -> u64 {
        self.requested_nodes as u64 * cores_per_node as u64
    }
}

/// A replayable set of jobs, sorted by `(submit, id)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub jobs: Vec<Job>,
    /// Trace lines skipped because runtime or processor count was missing.
    pub dropped: usize,
}

impl Workload {
    pub fn new(mut jobs: Vec<Job>) -> Self {
        jobs.sort_by_key(|j| (j.submit, j.id));
        Workload { jobs, dropped: 0 }
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// Flag a seeded pseudo-random subset of jobs as malleable.
    ///
    /// The draw order follows the sorted job list, so a workload that
    /// round-trips through SWF gets the same flags for the same seed.
    pub fn mark_malleable(&mut self, fraction: f64, seed: u64) {
        // Domain-separate from other consumers of the run seed.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4d41_4c4c);
        for job in &mut self.jobs {
            job.malleable = rng.gen::<f64>() < fraction;
        }
    }

    /// Check that every job fits the cluster and that there is work to do.
    pub fn validate(&self, node_count: u32, cores_per_node: u32) -> Result<()> {
        if self.jobs.is_empty() {
            return Err(SimError::EmptyWorkload);
        }
        for job in &self.jobs {
            if job.requested_nodes > node_count {
                return Err(SimError::JobTooLarge {
                    job: job.id.0,
                    requested: job.requested_nodes,
                    available: node_count,
                });
            }
            if job.ranks_per_node > cores_per_node {
                return Err(SimError::InvalidConfig(format!(
                    "job {} pins {} ranks per node but nodes have {} cores",
                    job.id, job.ranks_per_node, cores_per_node
                )));
            }
        }
        Ok(())
    }

    /// Serialize as SWF v2. Fields the simulator does not track are `-1`.
    pub fn write_swf(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "; Version: 2")?;
        writeln!(w, "; Note: generated workload, times in seconds")?;
        for job in &self.jobs {
            writeln!(
                w,
                "{} {} -1 {} {} -1 -1 {} {} -1 1 -1 -1 -1 -1 -1 -1 -1",
                job.id,
                job.submit,
                job.base_runtime,
                job.requested_procs,
                job.requested_procs,
                job.requested_time,
            )?;
        }
        Ok(())
    }
}

/// Number of whitespace-separated fields in an SWF record.
const SWF_FIELDS: usize = 18;

/// Parse an SWF v2 trace.
///
/// Uses job id, submit time, run time, processor count (allocated, falling
/// back to requested) and requested time (falling back to run time). Jobs
/// without a positive runtime or processor count are dropped and counted.
pub fn parse_swf(src: &str, cores_per_node: u32) -> Result<Workload> {
    let mut jobs = Vec::new();
    let mut dropped = 0usize;
    for (idx, line) in src.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != SWF_FIELDS {
            return Err(SimError::WorkloadParse {
                line: line_no,
                reason: format!("expected {} fields, found {}", SWF_FIELDS, fields.len()),
            });
        }
        let mut nums = [0f64; SWF_FIELDS];
        for (i, f) in fields.iter().enumerate() {
            nums[i] = f.parse().map_err(|_| SimError::WorkloadParse {
                line: line_no,
                reason: format!("field {} is not a number: {f:?}", i + 1),
            })?;
        }
        let id = nums[0] as u64;
        let submit = nums[1].max(0.0) as u64;
        let run_time = nums[3];
        // Allocated processors, falling back to the requested count.
        let procs = if nums[4] > 0.0 { nums[4] } else { nums[7] };
        if run_time <= 0.0 || procs <= 0.0 {
            dropped += 1;
            continue;
        }
        let req_time = if nums[8] > 0.0 { nums[8] } else { run_time };
        let procs = procs as u32;
        jobs.push(Job {
            id: JobId(id),
            submit,
            base_runtime: run_time as u64,
            requested_time: req_time as u64,
            requested_procs: procs,
            requested_nodes: procs.div_ceil(cores_per_node),
            ranks_per_node: 1,
            malleable: false,
        });
    }
    let mut workload = Workload::new(jobs);
    workload.dropped = dropped;
    Ok(workload)
}

/// Parameters for the synthetic workload generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthParams {
    pub jobs: usize,
    /// Mean of the exponential inter-arrival distribution, seconds.
    pub mean_interarrival: f64,
    /// Node counts are drawn log-uniformly from this inclusive range.
    pub nodes_min: u32,
    pub nodes_max: u32,
    /// Base runtimes are drawn uniformly from this inclusive range, seconds.
    pub runtime_min: u64,
    pub runtime_max: u64,
    /// Requested time is the base runtime inflated by a uniform factor in
    /// `[1, max_inflation]`, so estimates never undershoot.
    pub max_inflation: f64,
    pub cores_per_node: u32,
    pub ranks_per_node: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            jobs: 1000,
            mean_interarrival: 60.0,
            nodes_min: 1,
            nodes_max: 64,
            runtime_min: 60,
            runtime_max: 24 * 3600,
            max_inflation: 4.0,
            cores_per_node: 48,
            ranks_per_node: 1,
        }
    }
}

/// Generate a seeded synthetic workload.
///
/// Per job the generator draws, in order: inter-arrival gap, node count,
/// base runtime, estimate inflation. The sequence is fixed so a given
/// `(params, seed)` pair always yields the same workload.
pub fn gen_synthetic(params: &SynthParams, seed: u64) -> Result<Workload> {
    if params.jobs == 0 {
        return Err(SimError::EmptyWorkload);
    }
    if params.nodes_min == 0 || params.nodes_min > params.nodes_max {
        return Err(SimError::InvalidConfig(format!(
            "invalid node range {}..={}",
            params.nodes_min, params.nodes_max
        )));
    }
    if params.runtime_min == 0 || params.runtime_min > params.runtime_max {
        return Err(SimError::InvalidConfig(format!(
            "invalid runtime range {}..={}",
            params.runtime_min, params.runtime_max
        )));
    }
    if params.max_inflation < 1.0 {
        return Err(SimError::InvalidConfig(
            "max_inflation must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::with_capacity(params.jobs);
    let mut submit = 0u64;
    // Node counts are drawn log-uniformly: production traces span orders of
    // magnitude with most of the mass on small jobs.
    let log_uniform = |rng: &mut ChaCha8Rng, min: f64, max: f64| -> f64 {
        rng.gen_range(min.ln()..=max.ln()).exp().round().clamp(min, max)
    };
    for i in 0..params.jobs {
        // Inverse-transform sample of the exponential distribution.
        let u: f64 = rng.gen();
        let gap = -params.mean_interarrival * (1.0 - u).ln();
        submit += gap.round() as u64;

        let nodes = log_uniform(&mut rng, params.nodes_min as f64, params.nodes_max as f64) as u32;
        let base = rng.gen_range(params.runtime_min..=params.runtime_max);
        let inflation = rng.gen_range(1.0..=params.max_inflation);
        let req = (base as f64 * inflation).ceil() as u64;

        jobs.push(Job {
            id: JobId(i as u64 + 1),
            submit,
            base_runtime: base,
            requested_time: req,
            requested_procs: nodes * params.cores_per_node,
            requested_nodes: nodes,
            ranks_per_node: params.ranks_per_node,
            malleable: false,
        });
    }
    Ok(Workload::new(jobs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swf_line(id: u64, submit: u64, run: i64, procs: i64, req_procs: i64, req_time: i64) -> String {
        format!("{id} {submit} -1 {run} {procs} 1.5 -1 {req_procs} {req_time} -1 1 -1 -1 -1 -1 -1 -1 -1")
    }

    #[test]
    fn parses_basic_trace_with_comments() {
        let src = format!(
            "; Version: 2\n; MaxNodes: 4\n{}\n{}\n",
            swf_line(1, 0, 3600, 96, 96, 7200),
            swf_line(2, 10, 100, 1, 1, 0)
        );
        let w = parse_swf(&src, 48).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.dropped, 0);
        let j = &w.jobs[0];
        assert_eq!(j.id, JobId(1));
        assert_eq!(j.base_runtime, 3600);
        assert_eq!(j.requested_time, 7200);
        assert_eq!(j.requested_nodes, 2);
        // Requested time of 0 falls back to the run time.
        assert_eq!(w.jobs[1].requested_time, 100);
        assert_eq!(w.jobs[1].requested_nodes, 1);
    }

    #[test]
    fn falls_back_to_requested_procs() {
        let src = swf_line(7, 5, 60, -1, 49, 60);
        let w = parse_swf(&src, 48).unwrap();
        assert_eq!(w.jobs[0].requested_procs, 49);
        assert_eq!(w.jobs[0].requested_nodes, 2);
    }

    #[test]
    fn drops_jobs_without_runtime_or_procs() {
        let src = format!(
            "{}\n{}\n{}\n",
            swf_line(1, 0, -1, 8, 8, 100),
            swf_line(2, 0, 100, -1, -1, 100),
            swf_line(3, 0, 100, 8, 8, 100)
        );
        let w = parse_swf(&src, 48).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.dropped, 2);
        assert_eq!(w.jobs[0].id, JobId(3));
    }

    #[test]
    fn rejects_wrong_field_count() {
        let err = parse_swf("1 2 3\n", 48).unwrap_err();
        match err {
            SimError::WorkloadParse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_field() {
        let src = "1 0 -1 ten 8 -1 -1 8 100 -1 1 -1 -1 -1 -1 -1 -1 -1\n";
        let err = parse_swf(src, 48).unwrap_err();
        match err {
            SimError::WorkloadParse { line, reason } => {
                assert_eq!(line, 1);
                assert!(reason.contains("field 4"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sorts_by_submit_then_id() {
        let src = format!(
            "{}\n{}\n{}\n",
            swf_line(9, 50, 10, 1, 1, 10),
            swf_line(3, 50, 10, 1, 1, 10),
            swf_line(5, 20, 10, 1, 1, 10)
        );
        let w = parse_swf(&src, 48).unwrap();
        let ids: Vec<u64> = w.jobs.iter().map(|j| j.id.0).collect();
        assert_eq!(ids, vec![5, 3, 9]);
    }

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let params = SynthParams {
            jobs: 200,
            ..SynthParams::default()
        };
        let a = gen_synthetic(&params, 42).unwrap();
        let b = gen_synthetic(&params, 42).unwrap();
        let c = gen_synthetic(&params, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for j in &a.jobs {
            assert!(j.requested_nodes >= params.nodes_min);
            assert!(j.requested_nodes <= params.nodes_max);
            assert!(j.base_runtime >= params.runtime_min);
            assert!(j.base_runtime <= params.runtime_max);
            assert!(j.requested_time >= j.base_runtime);
            assert!(j.requested_time as f64 <= j.base_runtime as f64 * params.max_inflation + 1.0);
        }
    }

    #[test]
    fn swf_round_trip_preserves_jobs_and_flags() {
        let params = SynthParams {
            jobs: 100,
            ..SynthParams::default()
        };
        let mut original = gen_synthetic(&params, 7).unwrap();
        original.mark_malleable(0.4, 7);
        let mut buf = Vec::new();
        original.write_swf(&mut buf).unwrap();
        let mut reloaded = parse_swf(std::str::from_utf8(&buf).unwrap(), params.cores_per_node).unwrap();
        reloaded.mark_malleable(0.4, 7);
        assert_eq!(original.jobs, reloaded.jobs);
    }

    #[test]
    fn mark_malleable_extremes_and_determinism() {
        let params = SynthParams {
            jobs: 500,
            ..SynthParams::default()
        };
        let mut w = gen_synthetic(&params, 1).unwrap();
        w.mark_malleable(0.0, 9);
        assert!(w.jobs.iter().all(|j| !j.malleable));
        w.mark_malleable(1.0, 9);
        assert!(w.jobs.iter().all(|j| j.malleable));
        w.mark_malleable(0.5, 9);
        let flags: Vec<bool> = w.jobs.iter().map(|j| j.malleable).collect();
        let count = flags.iter().filter(|&&m| m).count();
        assert!(count > 150 && count < 350, "fraction far off: {count}/500");
        let mut w2 = gen_synthetic(&params, 1).unwrap();
        w2.mark_malleable(0.5, 9);
        let flags2: Vec<bool> = w2.jobs.iter().map(|j| j.malleable).collect();
        assert_eq!(flags, flags2);
    }

    #[test]
    fn validate_rejects_oversized_job() {
        let params = SynthParams {
            jobs: 10,
            nodes_min: 4,
            nodes_max: 4,
            ..SynthParams::default()
        };
        let w = gen_synthetic(&params, 3).unwrap();
        assert!(w.validate(8, 48).is_ok());
        match w.validate(2, 48).unwrap_err() {
            SimError::JobTooLarge { requested, available, .. } => {
                assert_eq!(requested, 4);
                assert_eq!(available, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
