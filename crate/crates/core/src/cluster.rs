//! Cluster topology and core bookkeeping.
//!
//! Nodes are modeled as core counters, not core maps: each node holds a list
//! of residents in placement order with the number of cores they occupy.
//! While a node is busy its cores are always fully assigned — co-scheduling
//! moves cores between residents, it never leaves them idle — and that is
//! enforced as an invariant.
//!
//! When a malleable job starts on cores taken from a running job, the
//! transfer is recorded as an ownership edge from the lender to the borrower
//! so the cores can be returned when the borrower finishes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::workload::JobId;

/// Index of a node within the cluster.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Static shape of the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub nodes: u32,
    pub sockets_per_node: u32,
    pub cores_per_socket: u32,
}

impl ClusterConfig {
    pub fn new(nodes: u32, sockets_per_node: u32, cores_per_socket: u32) -> Self {
        ClusterConfig {
            nodes,
            sockets_per_node,
            cores_per_socket,
        }
    }

    pub fn cores_per_node(&self) -> u32 {
        self.sockets_per_node * self.cores_per_socket
    }

    pub fn total_cores(&self) -> u64 {
        self.nodes as u64 * self.cores_per_node() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.sockets_per_node == 0 || self.cores_per_socket == 0 {
            return Err(SimError::InvalidConfig(format!(
                "cluster needs at least one node, socket and core, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for ClusterConfig {
    /// Two 24-core sockets per node, matching a common HPC node shape.
    fn default() -> Self {
        ClusterConfig::new(16, 2, 24)
    }
}

/// A job's share of one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resident {
    pub job: JobId,
    pub cores: u32,
}

/// Record of cores moved from a running job to a newly started one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnershipEdge {
    pub lender: JobId,
    pub taken: u32,
    /// Lender's core count on the node before the transfer, for restoration.
    pub lender_before: u32,
}

/// Mutable allocation state of the whole machine.
#[derive(Debug, Clone)]
pub struct ClusterState {
    cfg: ClusterConfig,
    residents: Vec<Vec<Resident>>,
    free: BTreeSet<NodeId>,
    /// Keyed by `(node, borrower)`; a borrower takes cores from exactly one
    /// lender per node.
    edges: BTreeMap<(NodeId, JobId), OwnershipEdge>,
}

impl ClusterState {
    pub fn new(cfg: ClusterConfig) -> Self {
        ClusterState {
            residents: vec![Vec::new(); cfg.nodes as usize],
            free: (0..cfg.nodes).map(NodeId).collect(),
            cfg,
        edges: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn free_count(&self) -> u32 {
        self.free.len() as u32
    }

    /// Free nodes in ascending id order.
    pub fn free_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.free.iter().copied()
    }

    /// The first `n` free nodes, ascending.
    pub fn first_free(&self, n: u32) -> Vec<NodeId> {
        self.free.iter().copied().take(n as usize).collect()
    }

    pub fn residents(&self, node: NodeId) -> &[Resident] {
        &self.residents[node.0 as usize]
    }

    pub fn resident_cores(&self, node: NodeId, job: JobId) -> Option<u32> {
        self.residents(node)
            .iter()
            .find(|r| r.job == job)
            .map(|r| r.cores)
    }

    /// All nodes that currently host at least one job, ascending.
    pub fn busy_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.cfg.nodes)
            .map(NodeId)
            .filter(|n| !self.residents[n.0 as usize].is_empty())
    }

    fn allocated(&self, node: NodeId) -> u32 {
        self.residents(node).iter().map(|r| r.cores).sum()
    }

    /// Place `job` on `node` with `cores`. The node must have exactly that
    /// many cores unassigned.
    pub fn allocate(&mut self, node: NodeId, job: JobId, cores: u32) -> Result<()> {
        let spare = self.cfg.cores_per_node() - self.allocated(node);
        if cores == 0 || cores > spare {
            return Err(SimError::InvalidConfig(format!(
                "cannot place {cores} cores of job {job} on node {node} with {spare} spare"
            )));
        }
        if self.resident_cores(node, job).is_some() {
            return Err(SimError::InvalidConfig(format!(
                "job {job} is already resident on node {node}"
            )));
        }
        self.residents[node.0 as usize].push(Resident { job, cores });
        self.free.remove(&node);
        Ok(())
    }

    /// Change a resident's core count in place.
    pub fn resize(&mut self, node: NodeId, job: JobId, cores: u32) -> Result<()> {
        if cores == 0 {
            return Err(SimError::InvalidConfig(format!(
                "cannot shrink job {job} to zero cores on node {node}"
            )));
        }
        let others: u32 = self
            .residents(node)
            .iter()
            .filter(|r| r.job != job)
            .map(|r| r.cores)
            .sum();
        if others + cores > self.cfg.cores_per_node() {
            return Err(SimError::InvalidConfig(format!(
                "resizing job {job} to {cores} cores oversubscribes node {node}"
            )));
        }
        let slot = self.residents[node.0 as usize]
            .iter_mut()
            .find(|r| r.job == job)
            .ok_or_else(|| {
                SimError::InvalidConfig(format!("job {job} is not resident on node {node}"))
            })?;
        slot.cores = cores;
        Ok(())
    }

    /// Remove a resident, returning the cores it held. Frees the node when
    /// nobody is left.
    pub fn remove(&mut self, node: NodeId, job: JobId) -> Result<u32> {
        let list = &mut self.residents[node.0 as usize];
        let idx = list.iter().position(|r| r.job == job).ok_or_else(|| {
            SimError::InvalidConfig(format!("job {job} is not resident on node {node}"))
        })?;
        let cores = list.remove(idx).cores;
        if list.is_empty() {
            self.free.insert(node);
        }
        Ok(cores)
    }

    pub fn add_edge(&mut self, node: NodeId, borrower: JobId, edge: OwnershipEdge) {
        self.edges.insert((node, borrower), edge);
    }

    pub fn take_edge(&mut self, node: NodeId, borrower: JobId) -> Option<OwnershipEdge> {
        self.edges.remove(&(node, borrower))
    }

    pub fn edge(&self, node: NodeId, borrower: JobId) -> Option<&OwnershipEdge> {
        self.edges.get(&(node, borrower))
    }

    /// Edges on `node` whose lender is `job`, in borrower order.
    pub fn edges_lent_by(&self, node: NodeId, job: JobId) -> Vec<(JobId, OwnershipEdge)> {
        self.edges
            .range((node, JobId(0))..=(node, JobId(u64::MAX)))
            .filter(|(_, e)| e.lender == job)
            .map(|(&(_, borrower), &e)| (borrower, e))
            .collect()
    }

    /// Whether `job` lends cores on `node` to anyone.
    pub fn is_lender(&self, node: NodeId, job: JobId) -> bool {
        !self.edges_lent_by(node, job).is_empty()
    }

    /// Structural invariants: free-set consistency, full allocation of busy
    /// nodes, no duplicate residents, edges joining actual residents.
    pub fn validate(&self, time: u64) -> Result<()> {
        let fail = |reason: String| Err(SimError::InvariantViolation { time, reason });
        let cpn = self.cfg.cores_per_node();
        for n in 0..self.cfg.nodes {
            let node = NodeId(n);
            let list = self.residents(node);
            let total: u32 = list.iter().map(|r| r.cores).sum();
            if list.is_empty() != self.free.contains(&node) {
                return fail(format!("free set out of sync on node {node}"));
            }
            if !list.is_empty() && total != cpn {
                return fail(format!(
                    "busy node {node} has {total} of {cpn} cores assigned"
                ));
            }
            if list.iter().any(|r| r.cores == 0) {
                return fail(format!("zero-core resident on node {node}"));
            }
            let mut seen = BTreeSet::new();
            for r in list {
                if !seen.insert(r.job) {
                    return fail(format!("job {} resident twice on node {node}", r.job));
                }
            }
        }
        for (&(node, borrower), edge) in &self.edges {
            if self.resident_cores(node, borrower).is_none() {
                return fail(format!(
                    "edge borrower {borrower} is not resident on node {node}"
                ));
            }
            if self.resident_cores(node, edge.lender).is_none() {
                return fail(format!(
                    "edge lender {} is not resident on node {node}",
                    edge.lender
                ));
            }
            if edge.taken == 0 || edge.taken >= cpn {
                return fail(format!(
                    "edge on node {node} moves {} cores",
                    edge.taken
                ));
            }
        }
        Ok(())
    }
}
