//! Scheduling passes: conservative/EASY backfill plus the slowdown-driven
//! malleable path.
//!
//! A pass walks the queue in arrival order against a [`FreeProfile`] — a
//! step function of predicted free-node counts built from the running jobs'
//! worst-case release estimates. Jobs that fit now start; the rest get
//! reservations (all of them under conservative backfill, only the head
//! under EASY).
//!
//! Under the slowdown-driven policy, a malleable job that cannot start now
//! first compares its estimated response time when waiting for a static
//! slot against starting immediately on cores borrowed from running jobs.
//! If borrowing wins, a minimum-impact mate set is selected, subject to a
//! per-mate slowdown cutoff, and the start is taken only when it provably
//! delays none of the reservations made for higher-priority jobs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::NodeId;
use crate::engine::Simulation;
use crate::error::Result;
use crate::nodemgr;
use crate::selection::{
    self, cap_candidates, select_mates, update_cutoff, MateCandidate, MateSolution,
    SelectionProblem,
};
use crate::workload::{Job, JobId};

/// Scheduling policy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    /// Plain backfill; malleability flags are ignored.
    #[serde(rename = "static")]
    Static,
    /// Backfill plus slowdown-driven malleable starts.
    #[serde(rename = "sd")]
    SlowdownDriven,
}

/// Step function of predicted free-node counts from a pass origin onward.
/// The last step's value persists indefinitely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FreeProfile {
    /// `(time, free nodes)`, strictly increasing times, first at the origin.
    steps: Vec<(u64, u32)>,
}

impl FreeProfile {
    /// `releases` are `(time, nodes coming free)`, time-ascending, all
    /// strictly after `origin`.
    pub(crate) fn new(
        origin: u64,
        free_now: u32,
        releases: impl IntoIterator<Item = (u64, u32)>,
    ) -> Self {
        let mut steps = vec![(origin, free_now)];
        let mut level = free_now;
        for (t, n) in releases {
            debug_assert!(t > steps.last().unwrap().0, "releases must be sorted");
            level += n;
            steps.push((t, level));
        }
        FreeProfile { steps }
    }

    /// Earliest start time with `nodes` free for the whole `duration`.
    pub(crate) fn earliest_fit(&self, nodes: u32, duration: u64) -> u64 {
        let steps = &self.steps;
        let mut i = 0usize;
        while i < steps.len() {
            if steps[i].1 < nodes {
                i += 1;
                continue;
            }
            let start = steps[i].0;
            let end = start.saturating_add(duration);
            let mut deficit = None;
            let mut j = i + 1;
            while j < steps.len() && steps[j].0 < end {
                if steps[j].1 < nodes {
                    deficit = Some(j);
                    break;
                }
                j += 1;
            }
            match deficit {
                None => return start,
                // No start before the deficit can clear it; jump past.
                Some(j) => i = j,
            }
        }
        // The horizon always frees the whole machine, so a fit exists; be
        // defensive anyway.
        steps.last().map(|s| s.0).unwrap_or(0)
    }

    /// Remove `nodes` from the profile over `[start, start + duration)`.
    pub(crate) fn reserve(&mut self, start: u64, duration: u64, nodes: u32) {
        let end = start.saturating_add(duration);
        let s = self.split_at(start);
        let e = self.split_at(end);
        for step in &mut self.steps[s..e] {
            debug_assert!(step.1 >= nodes, "reserving more nodes than available");
            step.1 = step.1.saturating_sub(nodes);
        }
    }

    /// Index of the step starting exactly at `t`, splitting one if needed.
    fn split_at(&mut self, t: u64) -> usize {
        let last = *self.steps.last().expect("profile is never empty");
        if t > last.0 {
            self.steps.push((t, last.1));
            return self.steps.len() - 1;
        }
        match self.steps.binary_search_by_key(&t, |s| s.0) {
            Ok(i) => i,
            Err(i) => {
                debug_assert!(i > 0, "time before the profile origin");
                let value = self.steps[i - 1].1;
                self.steps.insert(i, (t, value));
                i
            }
        }
    }
}

/// Hypothetical malleable start, for checking reservation impact.
struct Hypo {
    /// Extended completion estimates of the shrunk mates.
    mate_ends: BTreeMap<JobId, u64>,
    /// Nodes the newcomer would occupy (mate nodes and free nodes).
    occupied: BTreeSet<NodeId>,
    /// The newcomer's own predicted completion.
    end: u64,
}

/// A malleable start the gate and selection have approved.
struct Decision {
    sol: MateSolution,
    cands: Vec<MateCandidate>,
    static_end: u64,
    mall_end: u64,
}

/// Why a malleable placement attempt did not produce a start.
enum MallOutcome {
    Start(Box<Decision>),
    /// Sharing the nodes would not beat the estimated static start.
    GateFail,
    /// No mate combination covered the demand within the penalty cutoff.
    NoSolution,
    /// A solution existed but would push back an earlier reservation.
    WouldDelay,
}

impl Simulation {
    /// One scheduling pass over the queue.
    pub(crate) fn backfill_pass(&mut self) -> Result<()> {
        let cutoff = update_cutoff(
            self.cfg.cutoff,
            self.running.iter().map(|(&id, run)| {
                let j = self.job(id);
                (run.exec.start - j.submit, j.requested_time)
            }),
        );
        let mut profile = self.build_profile(None);
        let mut reserved: Vec<(JobId, u64)> = Vec::new();
        let mut qi = 0usize;
        let mut considered = 0usize;
        while qi < self.queue.len() {
            if self.cfg.reservation_depth > 0 && considered == self.cfg.reservation_depth {
                break;
            }
            considered += 1;
            let id = self.queue[qi];
            let job = self.job(id).clone();
            let est = profile.earliest_fit(job.requested_nodes, job.requested_time);
            if est == self.now {
                profile.reserve(self.now, job.requested_time, job.requested_nodes);
                self.queue.remove(qi);
                self.start_static(id, &job)?;
                self.validate_if_enabled()?;
                continue;
            }
            if self.cfg.policy == Policy::SlowdownDriven && job.malleable {
                self.sd_tally.attempts += 1;
                let outcome = self.try_malleable(&job, est, cutoff, &reserved);
                match outcome {
                    MallOutcome::GateFail => self.sd_tally.gate_fail += 1,
                    MallOutcome::NoSolution => self.sd_tally.no_solution += 1,
                    MallOutcome::WouldDelay => self.sd_tally.would_delay += 1,
                    MallOutcome::Start(_) => self.sd_tally.starts += 1,
                }
                if let MallOutcome::Start(dec) = outcome {
                    self.queue.remove(qi);
                    if dec.sol.mates.is_empty() {
                        // Free nodes alone covered the demand: an ordinary
                        // start that provably delays nobody.
                        self.start_static(id, &job)?;
                    } else {
                        self.start_malleable(
                            id,
                            &job,
                            &dec.sol,
                            &dec.cands,
                            dec.static_end,
                            dec.mall_end,
                        )?;
                    }
                    self.validate_if_enabled()?;
                    // Mates now release later; rebuild and re-anchor the
                    // reservations made earlier in this pass (the delay
                    // check guarantees they can only move earlier).
                    profile = self.build_profile(None);
                    for (rid, rt) in reserved.iter_mut() {
                        let rj = self.job(*rid).clone();
                        let e2 = profile.earliest_fit(rj.requested_nodes, rj.requested_time);
                        debug_assert!(e2 <= *rt, "malleable start delayed a reservation");
                        profile.reserve(e2, rj.requested_time, rj.requested_nodes);
                        *rt = e2;
                    }
                    continue;
                }
            }
            if !self.cfg.easy || qi == 0 {
                profile.reserve(est, job.requested_time, job.requested_nodes);
                reserved.push((id, est));
            }
            qi += 1;
        }
        self.reservations = reserved;
        self.dirty = false;
        Ok(())
    }

    /// Gate, candidate collection, selection and the reservation-impact
    /// check for one malleable job. `est` is its static start estimate.
    fn try_malleable(
        &self,
        job: &Job,
        est: u64,
        cutoff: f64,
        reserved: &[(JobId, u64)],
    ) -> MallOutcome {
        let cpn = self.cores_per_node();
        // Generic grant estimate for the gate: a plain sharing-factor share.
        let generic = self.cfg.sharing.max_share(cpn);
        if generic < job.ranks_per_node.max(1) {
            return MallOutcome::GateFail;
        }
        let wait_est = est - self.now;
        let static_end = wait_est + job.requested_time;
        let mall_end = (job.requested_time * cpn as u64).div_ceil(generic as u64);
        if static_end <= mall_end {
            return MallOutcome::GateFail;
        }
        let cands = self.collect_candidates(job, cutoff);
        let free_nodes = if self.cfg.use_free_nodes {
            self.cluster.free_count()
        } else {
            0
        };
        let problem = SelectionProblem {
            candidates: &cands,
            free_nodes,
            target_nodes: job.requested_nodes,
            max_mates: self.cfg.max_mates,
            now: self.now,
            requested_time: job.requested_time,
            cores_per_node: cpn,
        };
        let Some(sol) = select_mates(&problem) else {
            return MallOutcome::NoSolution;
        };
        if self.would_delay(&sol, &cands, reserved) {
            return MallOutcome::WouldDelay;
        }
        MallOutcome::Start(Box::new(Decision { sol, cands, static_end, mall_end }))
    }

    /// Running malleable jobs able to lend cores to `job`, penalty-capped
    /// and penalty-ordered.
    fn collect_candidates(&self, job: &Job, cutoff: f64) -> Vec<MateCandidate> {
        let cpn = self.cores_per_node();
        let needed = job.ranks_per_node.max(1);
        let mut out = Vec::new();
        'mates: for (&mid, run) in &self.running {
            let mjob = self.job(mid);
            if !mjob.malleable {
                continue;
            }
            let mut grants = Vec::with_capacity(run.exec.node_cores.len());
            let mut min_grant = u32::MAX;
            let mut shrunk_min = u32::MAX;
            for (&node, &count) in &run.exec.node_cores {
                if self.cluster.residents(node).len() >= self.cfg.max_residents {
                    continue 'mates;
                }
                let take = nodemgr::extractable(self.cfg.sharing, cpn, count, mjob.ranks_per_node);
                if take < needed {
                    continue 'mates;
                }
                grants.push((node, take));
                min_grant = min_grant.min(take);
                shrunk_min = shrunk_min.min(count - take);
            }
            // The newcomer's worst-case duration if this mate alone set the
            // pace; the mate must be predicted to outlive it.
            let window = (job.requested_time * cpn as u64).div_ceil(min_grant as u64);
            let Some(end) =
                run.exec
                    .pred_end_shrunk(self.now, mjob, cpn, window, shrunk_min as u64)
            else {
                continue; // overdue: could end any moment, not a lender
            };
            if end < self.now + window {
                continue;
            }
            let wait = run.exec.start - mjob.submit;
            let increase = (end - run.exec.start).saturating_sub(mjob.requested_time);
            let p = selection::penalty(wait, increase, mjob.requested_time);
            if p >= cutoff {
                continue;
            }
            out.push(MateCandidate {
                job: mid,
                weight: run.exec.node_cores.len() as u32,
                penalty: p,
                predicted_end: end,
                min_grant,
                grants,
            });
        }
        cap_candidates(&mut out, self.cfg.candidate_cap);
        out
    }

    /// Would this start push any reservation made earlier in the pass past
    /// its promised time?
    fn would_delay(
        &self,
        sol: &MateSolution,
        cands: &[MateCandidate],
        reserved: &[(JobId, u64)],
    ) -> bool {
        if reserved.is_empty() {
            return false;
        }
        let mut mate_ends = BTreeMap::new();
        let mut occupied = BTreeSet::new();
        for &ci in &sol.mates {
            let cand = &cands[ci];
            mate_ends.insert(cand.job, self.mate_end_under_window(cand, sol.window));
            occupied.extend(cand.grants.iter().map(|&(node, _)| node));
        }
        occupied.extend(self.cluster.first_free(sol.free_used));
        let hypo = Hypo { mate_ends, occupied, end: self.now + sol.window };
        let mut profile = self.build_profile(Some(&hypo));
        for &(rid, rt) in reserved {
            let rj = self.job(rid);
            let e2 = profile.earliest_fit(rj.requested_nodes, rj.requested_time);
            if e2 > rt {
                return true;
            }
            profile.reserve(e2, rj.requested_time, rj.requested_nodes);
        }
        false
    }

    /// Free-node step function from the running jobs' release estimates,
    /// optionally overlaid with a hypothetical start.
    fn build_profile(&self, hypo: Option<&Hypo>) -> FreeProfile {
        // Expired estimates are clamped just past `now`: the job should end
        // any moment, but the profile must stay causal.
        let floor = self.now + 1;
        let mut node_release: BTreeMap<NodeId, u64> = BTreeMap::new();
        for (&id, run) in &self.running {
            let pe = hypo
                .and_then(|h| h.mate_ends.get(&id).copied())
                .unwrap_or(run.predicted_end)
                .max(floor);
            for &node in run.exec.node_cores.keys() {
                let slot = node_release.entry(node).or_insert(0);
                *slot = (*slot).max(pe);
            }
        }
        if let Some(h) = hypo {
            let end = h.end.max(floor);
            for &node in &h.occupied {
                let slot = node_release.entry(node).or_insert(0);
                *slot = (*slot).max(end);
            }
        }
        let free_now = self.cfg.cluster.nodes - node_release.len() as u32;
        let mut releases: BTreeMap<u64, u32> = BTreeMap::new();
        for (_, t) in node_release {
            *releases.entry(t).or_default() += 1;
        }
        FreeProfile::new(self.now, free_now, releases)
    }

    /// Estimated wait of a queued job if everything ahead of it keeps its
    /// reservation. `None` when the job is not queued.
    #[allow(dead_code)]
    pub(crate) fn estimate_wait(&self, id: JobId) -> Option<u64> {
        let pos = self.queue.iter().position(|&q| q == id)?;
        let mut profile = self.build_profile(None);
        for (i, &qid) in self.queue[..pos].iter().enumerate() {
            if self.cfg.easy && i != 0 {
                continue;
            }
            let qj = self.job(qid);
            let e = profile.earliest_fit(qj.requested_nodes, qj.requested_time);
            profile.reserve(e, qj.requested_time, qj.requested_nodes);
        }
        let j = self.job(id);
        Some(profile.earliest_fit(j.requested_nodes, j.requested_time) - self.now)
    }
}
