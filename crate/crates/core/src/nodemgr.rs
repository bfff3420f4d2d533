//! Node-level core management for co-scheduled jobs.
//!
//! Starting a malleable job takes cores from running residents ("lenders")
//! or whole free nodes; finishing one hands cores back. The rules:
//!
//! * A lender gives up at most a `SharingFactor` share of the node per
//!   event, and always keeps one core per pinned rank. With the default
//!   factor of 0.5 on a two-socket node, two residents end up with one
//!   socket each.
//! * When a borrower finishes first, its lender is restored to exactly the
//!   core count it had before the loan.
//! * When a lender finishes first, its cores are split evenly across the
//!   residents remaining on the node (earlier residents get the remainder)
//!   and the loan record is dropped — the borrower now owns those cores.

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, NodeId, OwnershipEdge};
use crate::error::{Result, SimError};
use crate::workload::JobId;

/// Fraction of a node's cores a single event may move away from a resident.
/// Must lie strictly between 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharingFactor(f64);

impl SharingFactor {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(SharingFactor(value))
        } else {
            Err(SimError::InvalidConfig(format!(
                "sharing factor must be in (0, 1), got {value}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Largest per-event grant on a node of `cores_per_node` cores.
    pub fn max_share(self, cores_per_node: u32) -> u32 {
        (self.0 * cores_per_node as f64).floor() as u32
    }
}

impl Default for SharingFactor {
    fn default() -> Self {
        SharingFactor(0.5)
    }
}

/// Cores extractable from a resident holding `cores` with `ranks` pinned
/// processes: the sharing-factor share, capped so every rank keeps a core.
pub fn extractable(sf: SharingFactor, cores_per_node: u32, cores: u32, ranks: u32) -> u32 {
    sf.max_share(cores_per_node).min(cores.saturating_sub(ranks))
}

/// Placement of one starting malleable job: a grant per node, each taken
/// from a lender or covering a whole free node.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPlan {
    pub job: JobId,
    pub per_node: Vec<NodeGrant>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGrant {
    pub node: NodeId,
    pub cores: u32,
    /// Resident shrunk to make room; `None` means the node was free.
    pub lender: Option<JobId>,
}

/// One resident's core count changing on one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreTransfer {
    pub job: JobId,
    pub node: NodeId,
    pub old_cores: u32,
    pub new_cores: u32,
}

/// Apply a start plan: shrink lenders, place the newcomer, record loans.
/// Returns the lender shrinks for the caller to propagate.
pub fn apply_start(cluster: &mut ClusterState, plan: &StartPlan) -> Result<Vec<CoreTransfer>> {
    let mut shrinks = Vec::new();
    for grant in &plan.per_node {
        match grant.lender {
            Some(lender) => {
                let old = cluster.resident_cores(grant.node, lender).ok_or_else(|| {
                    SimError::InvalidConfig(format!(
                        "lender {lender} is not resident on node {}",
                        grant.node
                    ))
                })?;
                if grant.cores >= old {
                    return Err(SimError::InvalidConfig(format!(
                        "grant of {} cores would empty lender {lender} on node {}",
                        grant.cores, grant.node
                    )));
                }
                cluster.resize(grant.node, lender, old - grant.cores)?;
                cluster.allocate(grant.node, plan.job, grant.cores)?;
                cluster.add_edge(
                    grant.node,
                    plan.job,
                    OwnershipEdge {
                        lender,
                        taken: grant.cores,
                        lender_before: old,
                    },
                );
                shrinks.push(CoreTransfer {
                    job: lender,
                    node: grant.node,
                    old_cores: old,
                    new_cores: old - grant.cores,
                });
            }
            None => cluster.allocate(grant.node, plan.job, grant.cores)?,
        }
    }
    Ok(shrinks)
}

/// Release a finishing job's cores on `nodes` (its full footprint).
/// Returns the expansions of surviving residents.
pub fn apply_end(cluster: &mut ClusterState, job: JobId, nodes: &[NodeId]) -> Result<Vec<CoreTransfer>> {
    let mut expands = Vec::new();
    for &node in nodes {
        let borrowed = cluster.take_edge(node, job);
        let lent = cluster.edges_lent_by(node, job);
        let mine = cluster.remove(node, job)?;
        let remaining: Vec<(JobId, u32)> = cluster
            .residents(node)
            .iter()
            .map(|r| (r.job, r.cores))
            .collect();
        if remaining.is_empty() {
            continue;
        }
        if let Some(edge) = borrowed {
            if !lent.is_empty() {
                return Err(SimError::InvariantViolation {
                    time: 0,
                    reason: format!("job {job} both borrows and lends on node {node}"),
                });
            }
            // Hand the loan back: the lender must land exactly where it was.
            let old = cluster.resident_cores(node, edge.lender).ok_or_else(|| {
                SimError::InvariantViolation {
                    time: 0,
                    reason: format!("lender {} vanished from node {node}", edge.lender),
                }
            })?;
            if mine != edge.taken || old + edge.taken != edge.lender_before {
                return Err(SimError::InvariantViolation {
                    time: 0,
                    reason: format!(
                        "restoring {} on node {node}: {old}+{} != {}",
                        edge.lender, edge.taken, edge.lender_before
                    ),
                });
            }
            cluster.resize(node, edge.lender, edge.lender_before)?;
            expands.push(CoreTransfer {
                job: edge.lender,
                node,
                old_cores: old,
                new_cores: edge.lender_before,
            });
        } else {
            // Lender (or plain co-resident) exits: split its cores across
            // whoever is left, dropping the loan records — the borrowers
            // own those cores now.
            for (borrower, _) in lent {
                cluster.take_edge(node, borrower);
            }
            let shares = distribute_evenly(mine, remaining.len());
            for ((other, old), share) in remaining.into_iter().zip(shares) {
                if share == 0 {
                    continue;
                }
                cluster.resize(node, other, old + share)?;
                expands.push(CoreTransfer {
                    job: other,
                    node,
                    old_cores: old,
                    new_cores: old + share,
                });
            }
        }
    }
    Ok(expands)
}

/// Split `cores` into `parts` near-equal shares, remainder to the front.
pub fn distribute_evenly(cores: u32, parts: usize) -> Vec<u32> {
    assert!(parts > 0);
    let parts = parts as u32;
    let base = cores / parts;
    let rem = cores % parts;
    (0..parts).map(|i| base + u32::from(i < rem)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterConfig;

    fn two_socket_cluster() -> ClusterState {
        ClusterState::new(ClusterConfig::new(4, 2, 24))
    }

    #[test]
    fn default_factor_splits_a_node_into_sockets() {
        let sf = SharingFactor::default();
        assert_eq!(extractable(sf, 48, 48, 1), 24);
    }

    #[test]
    fn rank_floor_limits_the_share() {
        let sf = SharingFactor::default();
        // Resident on 24 cores with 16 ranks can only spare 8.
        assert_eq!(extractable(sf, 48, 24, 16), 8);
        // At the floor nothing is extractable.
        assert_eq!(extractable(sf, 48, 16, 16), 0);
        // Tiny factors round down to zero.
        assert_eq!(extractable(SharingFactor::new(0.01).unwrap(), 48, 48, 1), 0);
    }

    #[test]
    fn sharing_factor_bounds() {
        assert!(SharingFactor::new(0.0).is_err());
        assert!(SharingFactor::new(1.0).is_err());
        assert!(SharingFactor::new(0.5).is_ok());
    }

    #[test]
    fn distribute_evenly_handles_remainders() {
        assert_eq!(distribute_evenly(24, 1), vec![24]);
        assert_eq!(distribute_evenly(24, 2), vec![12, 12]);
        assert_eq!(distribute_evenly(25, 2), vec![13, 12]);
        assert_eq!(distribute_evenly(1, 2), vec![1, 0]);
    }

    /// Shrink-start, then finish the borrower: lender restored exactly.
    #[test]
    fn borrower_exit_restores_lender() {
        let mut c = two_socket_cluster();
        c.allocate(NodeId(0), JobId(1), 48).unwrap();
        c.allocate(NodeId(1), JobId(1), 48).unwrap();
        let plan = StartPlan {
            job: JobId(2),
            per_node: vec![
                NodeGrant { node: NodeId(0), cores: 24, lender: Some(JobId(1)) },
                NodeGrant { node: NodeId(1), cores: 24, lender: Some(JobId(1)) },
            ],
        };
        let shrinks = apply_start(&mut c, &plan).unwrap();
        assert_eq!(
            shrinks,
            vec![
                CoreTransfer { job: JobId(1), node: NodeId(0), old_cores: 48, new_cores: 24 },
                CoreTransfer { job: JobId(1), node: NodeId(1), old_cores: 48, new_cores: 24 },
            ]
        );
        c.validate(0).unwrap();

        let expands = apply_end(&mut c, JobId(2), &[NodeId(0), NodeId(1)]).unwrap();
        assert_eq!(
            expands,
            vec![
                CoreTransfer { job: JobId(1), node: NodeId(0), old_cores: 24, new_cores: 48 },
                CoreTransfer { job: JobId(1), node: NodeId(1), old_cores: 24, new_cores: 48 },
            ]
        );
        assert_eq!(c.resident_cores(NodeId(0), JobId(1)), Some(48));
        assert!(c.edge(NodeId(0), JobId(2)).is_none());
        c.validate(0).unwrap();
    }

    /// Finish the lender first: the borrower absorbs its cores.
    #[test]
    fn lender_exit_hands_cores_to_borrower() {
        let mut c = two_socket_cluster();
        c.allocate(NodeId(0), JobId(1), 48).unwrap();
        let plan = StartPlan {
            job: JobId(2),
            per_node: vec![NodeGrant { node: NodeId(0), cores: 24, lender: Some(JobId(1)) }],
        };
        apply_start(&mut c, &plan).unwrap();

        let expands = apply_end(&mut c, JobId(1), &[NodeId(0)]).unwrap();
        assert_eq!(
            expands,
            vec![CoreTransfer { job: JobId(2), node: NodeId(0), old_cores: 24, new_cores: 48 }]
        );
        assert!(c.edge(NodeId(0), JobId(2)).is_none());
        c.validate(0).unwrap();
        // The borrower now owns the node; its own exit just frees it.
        let expands = apply_end(&mut c, JobId(2), &[NodeId(0)]).unwrap();
        assert!(expands.is_empty());
        assert_eq!(c.free_count(), 4);
    }

    #[test]
    fn free_node_grants_take_whole_nodes() {
        let mut c = two_socket_cluster();
        c.allocate(NodeId(0), JobId(1), 48).unwrap();
        let plan = StartPlan {
            job: JobId(2),
            per_node: vec![
                NodeGrant { node: NodeId(0), cores: 24, lender: Some(JobId(1)) },
                NodeGrant { node: NodeId(1), cores: 48, lender: None },
            ],
        };
        let shrinks = apply_start(&mut c, &plan).unwrap();
        assert_eq!(shrinks.len(), 1);
        assert_eq!(c.resident_cores(NodeId(1), JobId(2)), Some(48));
        c.validate(0).unwrap();
    }

    #[test]
    fn rejects_grant_that_empties_the_lender() {
        let mut c = two_socket_cluster();
        c.allocate(NodeId(0), JobId(1), 48).unwrap();
        let plan = StartPlan {
            job: JobId(2),
            per_node: vec![NodeGrant { node: NodeId(0), cores: 48, lender: Some(JobId(1)) }],
        };
        assert!(apply_start(&mut c, &plan).is_err());
    }
}
