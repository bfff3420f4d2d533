//! Runtime models for jobs on shrunk allocations.
//!
//! A job's total work is `base_runtime * denominator` integer work units and
//! an allocation contributes a per-second numerator, so progress is exact
//! rational arithmetic and runs are bit-for-bit reproducible:
//!
//! * **Ideal**: work scales with the total cores held; numerator is the sum
//!   of per-node core counts, denominator the full allocation. Models a
//!   perfectly elastic application.
//! * **Worst**: work is bottlenecked by the most-shrunk node; numerator is
//!   the minimum per-node core count, denominator the cores of one full
//!   node. Models a synchronous application that advances at the pace of
//!   its slowest member, so extra cores elsewhere are wasted.
//!
//! Both rates are 1 at full allocation. The scheduler always *predicts* with
//! the worst model over the user's requested time; which model governs
//! actual execution is a per-run choice.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::NodeId;
use crate::workload::Job;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RuntimeModel {
    #[default]
    Ideal,
    Worst,
}

impl RuntimeModel {
    /// Work units the whole job represents per second of runtime.
    pub fn denominator(self, full_cores: u64, cores_per_node: u32) -> u64 {
        match self {
            RuntimeModel::Ideal => full_cores,
            RuntimeModel::Worst => cores_per_node as u64,
        }
    }

    /// Work units an allocation earns per second.
    pub fn numerator(self, counts: impl IntoIterator<Item = u32>) -> u64 {
        let mut sum = 0u64;
        let mut min = u64::MAX;
        for c in counts {
            debug_assert!(c > 0, "resident with zero cores");
            sum += c as u64;
            min = min.min(c as u64);
        }
        assert!(min != u64::MAX, "empty allocation");
        match self {
            RuntimeModel::Ideal => sum,
            RuntimeModel::Worst => min,
        }
    }
}

/// One span of a hypothetical execution timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    /// Span length in seconds; the final slot extends indefinitely.
    pub duration: u64,
    pub sum_cores: u64,
    pub min_cores: u64,
}

impl Slot {
    pub fn from_counts(duration: u64, counts: &[u32]) -> Self {
        assert!(!counts.is_empty() && counts.iter().all(|&c| c > 0));
        Slot {
            duration,
            sum_cores: counts.iter().map(|&c| c as u64).sum(),
            min_cores: counts.iter().map(|&c| c as u64).min().unwrap(),
        }
    }

    fn numerator(&self, model: RuntimeModel) -> u64 {
        match model {
            RuntimeModel::Ideal => self.sum_cores,
            RuntimeModel::Worst => self.min_cores,
        }
    }
}

/// Seconds needed to finish `base_runtime` worth of work over a timeline of
/// allocation slots. The last slot persists until completion.
pub fn elapsed_to_complete(
    base_runtime: u64,
    full_cores: u64,
    cores_per_node: u32,
    model: RuntimeModel,
    slots: &[Slot],
) -> u64 {
    assert!(!slots.is_empty(), "timeline needs at least one slot");
    let target = base_runtime * model.denominator(full_cores, cores_per_node);
    let mut done = 0u64;
    let mut elapsed = 0u64;
    for (i, slot) in slots.iter().enumerate() {
        let num = slot.numerator(model);
        let last = i == slots.len() - 1;
        let earned = slot.duration.saturating_mul(num);
        if !last && done + earned < target {
            done += earned;
            elapsed += slot.duration;
            continue;
        }
        return elapsed + (target - done).div_ceil(num);
    }
    unreachable!()
}

/// Extra runtime over the base caused by running parts of the timeline on a
/// reduced allocation.
pub fn runtime_increase(
    base_runtime: u64,
    full_cores: u64,
    cores_per_node: u32,
    model: RuntimeModel,
    slots: &[Slot],
) -> u64 {
    elapsed_to_complete(base_runtime, full_cores, cores_per_node, model, slots) - base_runtime
}

/// Progress bookkeeping for one running job.
///
/// Tracks two counters: work done under the execution model (drives actual
/// completion) and under the prediction model (worst-case, measured against
/// the requested time; drives every scheduler estimate). Counters fold in
/// elapsed time lazily — `advance` must be called before any reconfiguration
/// so spans are attributed to the allocation they ran on.
#[derive(Debug, Clone)]
pub struct ExecutionState {
    pub start: u64,
    pub node_cores: BTreeMap<NodeId, u32>,
    /// When `node_cores` took effect.
    pub config_since: u64,
    done_exec: u64,
    done_pred: u64,
    /// Bumped on every reconfiguration; stale completion events carry the
    /// old generation and are ignored.
    pub generation: u32,
}

impl ExecutionState {
    pub fn new(start: u64, node_cores: BTreeMap<NodeId, u32>) -> Self {
        assert!(!node_cores.is_empty());
        ExecutionState {
            start,
            node_cores,
            config_since: start,
            done_exec: 0,
            done_pred: 0,
            generation: 0,
        }
    }

    fn exec_numerator(&self, model: RuntimeModel) -> u64 {
        model.numerator(self.node_cores.values().copied())
    }

    fn pred_numerator(&self) -> u64 {
        RuntimeModel::Worst.numerator(self.node_cores.values().copied())
    }

    /// Fold work earned since the last configuration change into the
    /// counters.
    pub fn advance(&mut self, now: u64, model: RuntimeModel) {
        debug_assert!(now >= self.config_since);
        let dt = now - self.config_since;
        self.done_exec += dt * self.exec_numerator(model);
        self.done_pred += dt * self.pred_numerator();
        self.config_since = now;
    }

    /// Switch to a new allocation at `now`.
    pub fn reconfigure(&mut self, now: u64, model: RuntimeModel, node_cores: BTreeMap<NodeId, u32>) {
        assert!(!node_cores.is_empty());
        self.advance(now, model);
        self.node_cores = node_cores;
        self.generation += 1;
    }

    /// Seconds from `now` until the job completes, assuming the current
    /// allocation persists.
    pub fn exec_remaining(&self, now: u64, job: &Job, model: RuntimeModel, cores_per_node: u32) -> u64 {
        let target = job.base_runtime * model.denominator(job.full_cores(cores_per_node), cores_per_node);
        let num = self.exec_numerator(model);
        let done = self.done_exec + (now - self.config_since) * num;
        target.saturating_sub(done).div_ceil(num)
    }

    /// Work done so far in prediction space, at `now`.
    fn pred_done(&self, now: u64) -> u64 {
        self.done_pred + (now - self.config_since) * self.pred_numerator()
    }

    /// Predicted seconds from `now` until completion, against the requested
    /// time under the worst-case model. `None` when the job has already
    /// outlived its estimate and could end at any moment.
    pub fn pred_remaining(&self, now: u64, job: &Job, cores_per_node: u32) -> Option<u64> {
        let target = job.requested_time * cores_per_node as u64;
        let done = self.pred_done(now);
        if done >= target {
            return None;
        }
        Some((target - done).div_ceil(self.pred_numerator()))
    }

    /// Predicted absolute completion time if the job runs on `shrunk_min`
    /// cores per node for the next `window` seconds and then returns to its
    /// current allocation. `None` when the job is past its estimate.
    pub fn pred_end_shrunk(
        &self,
        now: u64,
        job: &Job,
        cores_per_node: u32,
        window: u64,
        shrunk_min: u64,
    ) -> Option<u64> {
        assert!(shrunk_min > 0);
        let target = job.requested_time * cores_per_node as u64;
        let done = self.pred_done(now);
        if done >= target {
            return None;
        }
        let in_window = window.saturating_mul(shrunk_min);
        if done + in_window >= target {
            return Some(now + (target - done).div_ceil(shrunk_min));
        }
        let after = target - done - in_window;
        Some(now + window + after.div_ceil(self.pred_numerator()))
    }
}
