//! Mate selection for malleable starts.
//!
//! When a malleable job would profit from starting early on borrowed cores,
//! the scheduler picks a set of running "mate" jobs to shrink. Each mate
//! carries a penalty — the slowdown its own execution would suffer — and the
//! chosen set must cover the newcomer's node demand exactly while minimizing
//! the summed penalty (the *performance impact*). Free nodes can fill the
//! remainder at zero impact.
//!
//! [`select_mates`] is the production search (penalty-ordered with pruning),
//! [`brute_force_select`] the plain exhaustive reference; they must agree
//! bit-for-bit, ties included. Ties are broken toward the lexicographically
//! smallest job-id tuple, and impacts are summed in job-id order in both so
//! equal sets produce equal floats.

use serde::{Deserialize, Serialize};

use crate::cluster::NodeId;
use crate::workload::JobId;

/// A running job that could lend cores, as seen at one scheduling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MateCandidate {
    pub job: JobId,
    /// Nodes this mate would contribute (all of its nodes).
    pub weight: u32,
    /// Predicted slowdown of the mate if shrunk: non-negative, finite.
    pub penalty: f64,
    /// Predicted absolute completion time of the shrunk mate; it must
    /// outlive the newcomer for the loan to be returnable.
    pub predicted_end: u64,
    /// Smallest per-node core grant this mate offers.
    pub min_grant: u32,
    /// Cores taken per node if this mate is chosen.
    pub grants: Vec<(NodeId, u32)>,
}

/// One mate-selection instance.
#[derive(Debug, Clone)]
pub struct SelectionProblem<'a> {
    pub candidates: &'a [MateCandidate],
    /// Free nodes usable as zero-impact filler (0 disables them).
    pub free_nodes: u32,
    /// Node demand of the newcomer; must be covered exactly.
    pub target_nodes: u32,
    /// Upper bound on the number of mates in a solution.
    pub max_mates: usize,
    pub now: u64,
    /// Newcomer's requested time, for its worst-case shrunk duration.
    pub requested_time: u64,
    pub cores_per_node: u32,
}

/// Chosen mates (indices into the problem's candidate slice, ordered by job
/// id) plus the free nodes that complete the cover.
#[derive(Debug, Clone, PartialEq)]
pub struct MateSolution {
    pub mates: Vec<usize>,
    pub free_used: u32,
    /// Summed mate penalties, in job-id order.
    pub impact: f64,
    /// Newcomer's predicted runtime on the granted cores (worst-case).
    pub window: u64,
}

/// Slowdown a job is predicted to reach: `(wait + increase + requested) /
/// requested`.
pub fn penalty(wait: u64, increase: u64, requested: u64) -> f64 {
    debug_assert!(requested > 0);
    (wait + increase + requested) as f64 / requested as f64
}

/// How the per-mate penalty cutoff is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum CutoffPolicy {
    /// Fixed bound; mates with `penalty < bound` qualify.
    Fixed(f64),
    /// Mean achieved slowdown of the currently running jobs; unbounded when
    /// nothing runs.
    #[default]
    DynamicAverage,
}

/// Evaluate the cutoff at a scheduling instant. `running` yields each
/// running job's `(wait, requested_time)` in a deterministic order.
pub fn update_cutoff(policy: CutoffPolicy, running: impl Iterator<Item = (u64, u64)>) -> f64 {
    match policy {
        CutoffPolicy::Fixed(bound) => bound,
        CutoffPolicy::DynamicAverage => {
            let mut sum = 0.0;
            let mut n = 0u64;
            for (wait, req) in running {
                sum += (wait + req) as f64 / req as f64;
                n += 1;
            }
            if n == 0 {
                f64::INFINITY
            } else {
                sum / n as f64
            }
        }
    }
}

/// Order candidates by `(penalty, job)` and keep the best `cap`.
pub fn cap_candidates(candidates: &mut Vec<MateCandidate>, cap: usize) {
    candidates.sort_by(|a, b| {
        a.penalty
            .partial_cmp(&b.penalty)
            .expect("penalties are finite")
            .then(a.job.cmp(&b.job))
    });
    candidates.truncate(cap);
}

/// Sum penalties of a combo in job-id order so both search strategies
/// produce bit-identical impacts for the same set.
fn canonical_impact(candidates: &[MateCandidate], combo: &[usize]) -> f64 {
    let mut ordered: Vec<usize> = combo.to_vec();
    ordered.sort_by_key(|&i| candidates[i].job);
    ordered.iter().map(|&i| candidates[i].penalty).sum()
}

/// Check a combo against the cover, capacity and containment constraints.
fn evaluate(p: &SelectionProblem, combo: &[usize]) -> Option<MateSolution> {
    let weight: u32 = combo.iter().map(|&i| p.candidates[i].weight).sum();
    if weight > p.target_nodes {
        return None;
    }
    let free_used = p.target_nodes - weight;
    if free_used > p.free_nodes {
        return None;
    }
    // Worst-case duration of the newcomer on the granted cores: free nodes
    // are granted whole, so only mate grants can lower the minimum.
    let min_grant = combo
        .iter()
        .map(|&i| p.candidates[i].min_grant)
        .min()
        .unwrap_or(p.cores_per_node);
    debug_assert!(min_grant > 0 && min_grant <= p.cores_per_node);
    let window = (p.requested_time * p.cores_per_node as u64).div_ceil(min_grant as u64);
    // Every mate must be predicted to outlive the newcomer, otherwise its
    // cores could not be taken for the whole loan.
    let deadline = p.now.saturating_add(window);
    if combo
        .iter()
        .any(|&i| p.candidates[i].predicted_end < deadline)
    {
        return None;
    }
    let mut mates: Vec<usize> = combo.to_vec();
    mates.sort_by_key(|&i| p.candidates[i].job);
    Some(MateSolution {
        impact: canonical_impact(p.candidates, combo),
        mates,
        free_used,
        window,
    })
}

/// `(impact, id-tuple)` key; the id tuple breaks impact ties, smaller-first,
/// with a shorter tuple beating its extensions.
fn solution_key(p: &SelectionProblem, sol: &MateSolution) -> (f64, Vec<JobId>) {
    (sol.impact, sol.mates.iter().map(|&i| p.candidates[i].job).collect())
}

fn keep_better(p: &SelectionProblem, best: &mut Option<(f64, Vec<JobId>, MateSolution)>, sol: MateSolution) {
    let (impact, ids) = solution_key(p, &sol);
    match best {
        Some((bi, bids, _)) if (impact, &ids) >= (*bi, bids) => {}
        _ => *best = Some((impact, ids, sol)),
    }
}

fn search_rec(
    p: &SelectionProblem,
    order: &[usize],
    start: usize,
    combo: &mut Vec<usize>,
    prune: bool,
    best: &mut Option<(f64, Vec<JobId>, MateSolution)>,
) {
    if let Some(sol) = evaluate(p, combo) {
        keep_better(p, best, sol);
    }
    if combo.len() == p.max_mates {
        return;
    }
    for pos in start..order.len() {
        combo.push(order[pos]);
        // A superset's canonical impact can only grow (penalties are
        // non-negative), so a prefix already beaten cannot recover. Ties
        // must still be explored for the id-order break.
        let viable = !prune
            || match best {
                Some((bi, _, _)) => canonical_impact(p.candidates, combo) <= *bi,
                None => true,
            };
        if viable {
            search_rec(p, order, pos + 1, combo, prune, best);
        }
        combo.pop();
    }
}

fn run_search(p: &SelectionProblem, order: Vec<usize>, prune: bool) -> Option<MateSolution> {
    let mut best = None;
    search_rec(p, &order, 0, &mut Vec::new(), prune, &mut best);
    best.map(|(_, _, sol)| sol)
}

/// Find the minimum-impact mate set covering the newcomer's node demand.
///
/// Explores combos in ascending penalty order and prunes prefixes that
/// already exceed the best impact found.
pub fn select_mates(p: &SelectionProblem) -> Option<MateSolution> {
    debug_assert!(p
        .candidates
        .iter()
        .all(|c| c.penalty >= 0.0 && c.penalty.is_finite()));
    let mut order: Vec<usize> = (0..p.candidates.len()).collect();
    order.sort_by(|&a, &b| {
        p.candidates[a]
            .penalty
            .partial_cmp(&p.candidates[b].penalty)
            .expect("penalties are finite")
            .then(p.candidates[a].job.cmp(&p.candidates[b].job))
    });
    run_search(p, order, true)
}

/// Exhaustive reference selection: every subset up to `max_mates`, no
/// ordering tricks, no pruning. Must agree with [`select_mates`] exactly.
pub fn brute_force_select(p: &SelectionProblem) -> Option<MateSolution> {
    run_search(p, (0..p.candidates.len()).collect(), false)
}
