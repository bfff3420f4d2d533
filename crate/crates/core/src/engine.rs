//! Discrete-event simulation engine.
//!
//! The engine replays a workload against one scheduler configuration. All
//! state advances through a single event heap ordered by `(time, class,
//! sequence)` — completions before submissions before timer ticks — and
//! every event batch at one timestamp is followed by at most one scheduling
//! pass. Nothing depends on wall-clock time, hash iteration order or float
//! accumulation, so a `(workload, config)` pair always produces the same
//! event log, byte for byte.

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterConfig, ClusterState, NodeId};
use crate::error::{Result, SimError};
use crate::eventlog::{CoreChange, EventLog, LogRecord, StartMode};
use crate::metrics::{summarize, SimReport};
use crate::nodemgr::{self, CoreTransfer, NodeGrant, SharingFactor, StartPlan};
use crate::runtime_model::{ExecutionState, RuntimeModel};
use crate::scheduler::Policy;
use crate::selection::{CutoffPolicy, MateCandidate, MateSolution};
use crate::workload::{Job, JobId, Workload};

/// Full configuration of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub cluster: ClusterConfig,
    pub policy: Policy,
    /// Model governing actual job progress. Predictions always use the
    /// worst-case model regardless.
    pub runtime_model: RuntimeModel,
    pub cutoff: CutoffPolicy,
    pub sharing: SharingFactor,
    /// Maximum mates shrunk for one malleable start.
    pub max_mates: usize,
    /// Cheapest candidates kept before subset search.
    pub candidate_cap: usize,
    /// Let free nodes complete a mate cover at zero impact.
    pub use_free_nodes: bool,
    /// Aggressive backfill: only the queue head gets a reservation.
    pub easy: bool,
    /// Seconds between periodic scheduling passes (0 = event-driven only).
    pub backfill_interval: u64,
    /// Queue positions examined per pass (0 = unlimited).
    pub reservation_depth: usize,
    /// Co-residents allowed per node.
    pub max_residents: usize,
    /// Run structural checks after every event; slows large runs.
    pub validate_every_event: bool,
    /// Recorded for provenance; the simulation itself is deterministic.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cluster: ClusterConfig::default(),
            policy: Policy::Static,
            runtime_model: RuntimeModel::Ideal,
            cutoff: CutoffPolicy::DynamicAverage,
            sharing: SharingFactor::default(),
            max_mates: 2,
            candidate_cap: 64,
            use_free_nodes: false,
            easy: false,
            backfill_interval: 30,
            reservation_depth: 512,
            max_residents: 2,
            validate_every_event: false,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        if self.max_mates == 0 {
            return Err(SimError::InvalidConfig("max_mates must be at least 1".into()));
        }
        if self.candidate_cap == 0 {
            return Err(SimError::InvalidConfig(
                "candidate_cap must be at least 1".into(),
            ));
        }
        if self.max_residents == 0 {
            return Err(SimError::InvalidConfig(
                "max_residents must be at least 1".into(),
            ));
        }
        if let CutoffPolicy::Fixed(bound) = self.cutoff {
            if bound.is_nan() || bound <= 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "fixed slowdown cutoff must be positive, got {bound}"
                )));
            }
        }
        // Re-check in case the factor was deserialized rather than built
        // through the validating constructor.
        SharingFactor::new(self.sharing.get())?;
        Ok(())
    }
}

/// Malleable-placement attempt outcomes, summed over all passes. An
/// attempt is one queued malleable job inspected after its static trial
/// failed; the counters say how each attempt was resolved.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SdTally {
    pub attempts: u64,
    /// Sharing would not beat the estimated static start.
    pub gate_fail: u64,
    /// No mate combination covered the demand within the penalty cutoff.
    pub no_solution: u64,
    /// A solution existed but would push back an earlier reservation.
    pub would_delay: u64,
    pub starts: u64,
}

/// Engine-side counters not derivable from the event log.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EngineStats {
    pub validated_events: u64,
    pub sd: SdTally,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: SimReport,
    pub log: EventLog,
    pub stats: EngineStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Payload {
    Complete { job: JobId, generation: u32 },
    Submit { idx: usize },
    Tick,
}

impl Payload {
    fn class(&self) -> u8 {
        match self {
            Payload::Complete { .. } => 0,
            Payload::Submit { .. } => 1,
            Payload::Tick => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ev {
    time: u64,
    seq: u64,
    payload: Payload,
}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.payload.class(), self.seq).cmp(&(
            other.time,
            other.payload.class(),
            other.seq,
        ))
    }
}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// One running job: exact progress counters plus the completion time the
/// scheduler currently believes in.
#[derive(Debug, Clone)]
pub(crate) struct Running {
    pub(crate) exec: ExecutionState,
    /// Worst-case estimate against the requested time, updated on every
    /// allocation change. Profiles clamp it to the future once it expires.
    pub(crate) predicted_end: u64,
}

pub(crate) struct Simulation {
    pub(crate) cfg: SimConfig,
    pub(crate) jobs: Vec<Job>,
    index: HashMap<JobId, usize>,
    pub(crate) cluster: ClusterState,
    pub(crate) running: BTreeMap<JobId, Running>,
    /// Pending jobs in arrival order.
    pub(crate) queue: Vec<JobId>,
    heap: BinaryHeap<Reverse<Ev>>,
    pub(crate) log: EventLog,
    pub(crate) now: u64,
    seq: u64,
    /// Set when state changed since the last scheduling pass.
    pub(crate) dirty: bool,
    tick_pending: bool,
    validated_events: u64,
    pub(crate) sd_tally: SdTally,
    /// Reservations `(job, start)` from the most recent pass.
    pub(crate) reservations: Vec<(JobId, u64)>,
}

impl Simulation {
    pub(crate) fn new(jobs: Vec<Job>, cfg: SimConfig) -> Self {
        let index = jobs.iter().enumerate().map(|(i, j)| (j.id, i)).collect();
        let cluster = ClusterState::new(cfg.cluster);
        let mut sim = Simulation {
            jobs,
            index,
            cluster,
            running: BTreeMap::new(),
            queue: Vec::new(),
            heap: BinaryHeap::new(),
            log: EventLog::new(),
            now: 0,
            seq: 0,
            dirty: false,
            tick_pending: false,
            validated_events: 0,
            sd_tally: SdTally::default(),
            reservations: Vec::new(),
            cfg,
        };
        for i in 0..sim.jobs.len() {
            let t = sim.jobs[i].submit;
            sim.push_event(t, Payload::Submit { idx: i });
        }
        sim
    }

    pub(crate) fn job(&self, id: JobId) -> &Job {
        &self.jobs[self.index[&id]]
    }

    fn push_event(&mut self, time: u64, payload: Payload) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(Ev { time, seq, payload }));
    }

    pub(crate) fn cores_per_node(&self) -> u32 {
        self.cfg.cluster.cores_per_node()
    }

    /// Drive the simulation until every job has completed.
    pub(crate) fn run_to_completion(&mut self) -> Result<()> {
        while let Some(&Reverse(ev)) = self.heap.peek() {
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            // Apply the whole batch at this timestamp, then schedule once.
            while let Some(&Reverse(next)) = self.heap.peek() {
                if next.time != self.now {
                    break;
                }
                let ev = self.heap.pop().unwrap().0;
                self.apply(ev)?;
            }
            if !self.queue.is_empty() && (self.dirty || self.any_overdue()) {
                self.backfill_pass()?;
            }
            if !self.queue.is_empty() && !self.tick_pending && self.cfg.backfill_interval > 0 {
                let t = self.now + self.cfg.backfill_interval;
                self.push_event(t, Payload::Tick);
                self.tick_pending = true;
            }
        }
        if !self.queue.is_empty() || !self.running.is_empty() {
            return Err(SimError::InvariantViolation {
                time: self.now,
                reason: format!(
                    "simulation drained with {} queued and {} running jobs",
                    self.queue.len(),
                    self.running.len()
                ),
            });
        }
        Ok(())
    }

    fn apply(&mut self, ev: Ev) -> Result<()> {
        match ev.payload {
            Payload::Submit { idx } => {
                let job = self.jobs[idx].clone();
                self.log.push(LogRecord::Submit {
                    t: self.now,
                    job: job.id,
                    nodes: job.requested_nodes,
                    requested_time: job.requested_time,
                    base_runtime: job.base_runtime,
                    malleable: job.malleable,
                });
                self.queue.push(job.id);
                self.dirty = true;
                self.validate_if_enabled()?;
            }
            Payload::Complete { job, generation } => {
                // Stale events from before a reconfiguration are ignored.
                let live = self
                    .running
                    .get(&job)
                    .is_some_and(|r| r.exec.generation == generation);
                if live {
                    self.finish_job(job)?;
                    self.validate_if_enabled()?;
                }
            }
            Payload::Tick => {
                self.tick_pending = false;
            }
        }
        Ok(())
    }

    /// Whether any running job has outlived its requested time; their
    /// release estimates drift with the clock, so passes stay worthwhile.
    fn any_overdue(&self) -> bool {
        self.running.values().any(|r| r.predicted_end <= self.now)
    }

    fn finish_job(&mut self, id: JobId) -> Result<()> {
        let job = self.job(id).clone();
        let run = self.running.remove(&id).expect("finishing job is running");
        debug_assert_eq!(
            run.exec
                .exec_remaining(self.now, &job, self.cfg.runtime_model, self.cores_per_node()),
            0,
            "completion fired before the work was done"
        );
        self.log.push(LogRecord::Complete { t: self.now, job: id });
        let nodes: Vec<NodeId> = run.exec.node_cores.keys().copied().collect();
        let now = self.now;
        let expands = nodemgr::apply_end(&mut self.cluster, id, &nodes)
            .map_err(|e| stamp_time(e, now))?;
        self.apply_transfers(&expands, false)?;
        self.dirty = true;
        Ok(())
    }

    /// Propagate core transfers into execution states, reissue completion
    /// events and log the changes. `shrink` selects the record kind.
    fn apply_transfers(&mut self, transfers: &[CoreTransfer], shrink: bool) -> Result<()> {
        let mut by_job: BTreeMap<JobId, Vec<CoreTransfer>> = BTreeMap::new();
        for tr in transfers {
            by_job.entry(tr.job).or_default().push(*tr);
        }
        let (model, cpn) = (self.cfg.runtime_model, self.cores_per_node());
        for (other, list) in by_job {
            let other_job = self.job(other).clone();
            let run = self
                .running
                .get_mut(&other)
                .expect("transfer target is running");
            let mut counts = run.exec.node_cores.clone();
            for tr in &list {
                counts.insert(tr.node, tr.new_cores);
            }
            run.exec.reconfigure(self.now, model, counts);
            let rem = run.exec.exec_remaining(self.now, &other_job, model, cpn);
            let generation = run.exec.generation;
            // Shrunk mates get their estimate from the start decision
            // (restore-aware); expansions recompute on the spot.
            if !shrink {
                run.predicted_end = match run.exec.pred_remaining(self.now, &other_job, cpn) {
                    Some(r) => self.now + r,
                    None => self.now,
                };
            }
            let changes: Vec<CoreChange> = list
                .iter()
                .map(|tr| CoreChange {
                    node: tr.node,
                    old_cores: tr.old_cores,
                    new_cores: tr.new_cores,
                })
                .collect();
            let record = if shrink {
                LogRecord::Shrink { t: self.now, job: other, changes }
            } else {
                LogRecord::Expand { t: self.now, job: other, changes }
            };
            self.log.push(record);
            let t = self.now + rem;
            self.push_event(t, Payload::Complete { job: other, generation });
        }
        Ok(())
    }

    /// Start a job on whole free nodes.
    pub(crate) fn start_static(&mut self, id: JobId, job: &Job) -> Result<()> {
        let cpn = self.cores_per_node();
        let nodes = self.cluster.first_free(job.requested_nodes);
        debug_assert_eq!(nodes.len() as u32, job.requested_nodes);
        for &n in &nodes {
            self.cluster.allocate(n, id, cpn)?;
        }
        let counts: BTreeMap<NodeId, u32> = nodes.iter().map(|&n| (n, cpn)).collect();
        let exec = ExecutionState::new(self.now, counts);
        let rem = exec.exec_remaining(self.now, job, self.cfg.runtime_model, cpn);
        let generation = exec.generation;
        self.running.insert(
            id,
            Running { exec, predicted_end: self.now + job.requested_time },
        );
        let t = self.now + rem;
        self.push_event(t, Payload::Complete { job: id, generation });
        self.log.push(LogRecord::Start {
            t: self.now,
            job: id,
            mode: StartMode::Static,
            nodes: job.requested_nodes,
            mates: vec![],
            free_used: 0,
            static_end: 0,
            mall_end: 0,
            impact: 0.0,
        });
        self.dirty = true;
        Ok(())
    }

    /// Start a malleable job on cores taken from the chosen mates (plus
    /// whole free nodes, if any).
    pub(crate) fn start_malleable(
        &mut self,
        id: JobId,
        job: &Job,
        sol: &MateSolution,
        candidates: &[MateCandidate],
        static_end: u64,
        mall_end: u64,
    ) -> Result<()> {
        let cpn = self.cores_per_node();
        let mut per_node = Vec::new();
        let mut mate_ids = Vec::with_capacity(sol.mates.len());
        // Restore-aware completion estimates, fixed before any state moves.
        let mut mate_ends: BTreeMap<JobId, u64> = BTreeMap::new();
        for &ci in &sol.mates {
            let cand = &candidates[ci];
            mate_ids.push(cand.job);
            for &(node, cores) in &cand.grants {
                per_node.push(NodeGrant { node, cores, lender: Some(cand.job) });
            }
            mate_ends.insert(cand.job, self.mate_end_under_window(cand, sol.window));
        }
        for node in self.cluster.first_free(sol.free_used) {
            per_node.push(NodeGrant { node, cores: cpn, lender: None });
        }
        let plan = StartPlan { job: id, per_node };
        let now = self.now;
        let shrinks =
            nodemgr::apply_start(&mut self.cluster, &plan).map_err(|e| stamp_time(e, now))?;
        self.log.push(LogRecord::Start {
            t: self.now,
            job: id,
            mode: StartMode::Malleable,
            nodes: job.requested_nodes,
            mates: mate_ids,
            free_used: sol.free_used,
            static_end,
            mall_end,
            impact: sol.impact,
        });
        self.apply_transfers(&shrinks, true)?;
        for (mate, end) in mate_ends {
            self.running.get_mut(&mate).expect("mate is running").predicted_end = end;
        }
        let counts: BTreeMap<NodeId, u32> =
            plan.per_node.iter().map(|g| (g.node, g.cores)).collect();
        let exec = ExecutionState::new(self.now, counts);
        let rem = exec.exec_remaining(self.now, job, self.cfg.runtime_model, cpn);
        let generation = exec.generation;
        self.running.insert(
            id,
            Running { exec, predicted_end: self.now + sol.window },
        );
        let t = self.now + rem;
        self.push_event(t, Payload::Complete { job: id, generation });
        self.dirty = true;
        Ok(())
    }

    /// Predicted completion of a mate that lends cores for `window` seconds
    /// and is then restored.
    pub(crate) fn mate_end_under_window(&self, cand: &MateCandidate, window: u64) -> u64 {
        let run = &self.running[&cand.job];
        let mjob = self.job(cand.job);
        let shrunk_min = cand
            .grants
            .iter()
            .map(|&(node, g)| run.exec.node_cores[&node] - g)
            .min()
            .expect("mate has at least one node");
        run.exec
            .pred_end_shrunk(self.now, mjob, self.cores_per_node(), window, shrunk_min.into())
            .expect("candidates are never overdue")
    }

    pub(crate) fn validate_if_enabled(&mut self) -> Result<()> {
        if !self.cfg.validate_every_event {
            return Ok(());
        }
        self.validated_events += 1;
        self.validate_invariants()
    }

    /// Full structural audit: cluster consistency, exec/cluster agreement,
    /// per-rank core floors, and queue/running disjointness.
    pub(crate) fn validate_invariants(&self) -> Result<()> {
        self.cluster.validate(self.now)?;
        let fail = |reason: String| {
            Err(SimError::InvariantViolation { time: self.now, reason })
        };
        for (&id, run) in &self.running {
            let job = self.job(id);
            let floor = job.ranks_per_node.max(1);
            for (&node, &count) in &run.exec.node_cores {
                if self.cluster.resident_cores(node, id) != Some(count) {
                    return fail(format!(
                        "job {id} believes it holds {count} cores on node {node}, cluster disagrees"
                    ));
                }
                if count < floor {
                    return fail(format!(
                        "job {id} shrunk below its {floor}-core floor on node {node}"
                    ));
                }
            }
        }
        for node in self.cluster.busy_nodes() {
            for r in self.cluster.residents(node) {
                match self.running.get(&r.job) {
                    None => return fail(format!("node {node} hosts unknown job {}", r.job)),
                    Some(run) if !run.exec.node_cores.contains_key(&node) => {
                        return fail(format!(
                            "job {} is resident on node {node} without knowing it",
                            r.job
                        ))
                    }
                    Some(_) => {}
                }
            }
        }
        for id in &self.queue {
            if self.running.contains_key(id) {
                return fail(format!("job {id} is both queued and running"));
            }
        }
        Ok(())
    }
}

fn stamp_time(e: SimError, time: u64) -> SimError {
    match e {
        SimError::InvariantViolation { reason, .. } => {
            SimError::InvariantViolation { time, reason }
        }
        other => other,
    }
}

/// Replay `workload` under `cfg` and collect the report, event log and
/// engine counters.
pub fn run(workload: &Workload, cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    workload.validate(cfg.cluster.nodes, cfg.cluster.cores_per_node())?;
    let mut sim = Simulation::new(workload.jobs.clone(), cfg.clone());
    sim.run_to_completion()?;
    let report = summarize(&sim.log)?;
    Ok(RunOutput {
        report,
        log: sim.log,
        stats: EngineStats { validated_events: sim.validated_events, sd: sim.sd_tally },
    })
}
