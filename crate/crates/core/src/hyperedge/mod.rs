//! Streaming hyperedge construction.
//!
//! Homogeneous streams accumulate links in a [`Snapshot`]; when it holds
//! `b` distinct edges the maximal cliques of size ≥ 3 become hyperedges,
//! absorbing every live hyperedge they contain. A link whose endpoints do
//! not already share a hyperedge opens a pair hyperedge right away.
//!
//! Bipartite streams keep one fixed hyperedge per side-B node whose
//! members are the side-A nodes that touched it recently.
//!
//! Every live hyperedge owns one memory slot. Slots come from a free-list
//! pool so that the memory bank only grows to the peak number of
//! concurrently live hyperedges.

mod clique;
mod registry;

pub use clique::enumerate_maximal_cliques;
pub use registry::{BipartiteDelta, HyperedgeRegistry, Ingest, RegistryMode};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperedgeId(pub u64);

impl fmt::Display for HyperedgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0)
    }
}

/// Index of a memory slot in the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperedge {
    pub id: HyperedgeId,
    /// Ascending node ids.
    pub members: Vec<NodeId>,
    pub slot: SlotId,
    pub created_at: f64,
}

impl Hyperedge {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.members.binary_search(&n).is_ok()
    }

    /// `self.members ⊆ other` for ascending `other`.
    pub fn is_subset_of(&self, other: &[NodeId]) -> bool {
        self.members.iter().all(|m| other.binary_search(m).is_ok())
    }
}

/// Free-list of memory slots.
#[derive(Debug, Clone, Default)]
pub struct SlotPool {
    free: Vec<SlotId>,
    capacity: usize,
}

impl SlotPool {
    pub fn with_capacity(capacity: usize) -> Self {
        SlotPool {
            free: Vec::new(),
            capacity,
        }
    }

    pub fn claim(&mut self) -> SlotId {
        match self.free.pop() {
            Some(s) => s,
            None => {
                self.capacity += 1;
                SlotId(self.capacity - 1)
            }
        }
    }

    pub fn release(&mut self, slot: SlotId) {
        self.free.push(slot);
    }

    /// Total slots ever allocated (the bank size `z`).
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }
}

/// Edges accumulated since the last flush.
#[derive(Debug, Clone)]
pub struct Snapshot {
    // (min, max) -> latest link time
    edges: BTreeMap<(NodeId, NodeId), f64>,
    threshold: usize,
}

impl Snapshot {
    /// A snapshot that flushes once it holds `threshold` distinct edges.
    pub fn new(threshold: usize) -> Self {
        Snapshot {
            edges: BTreeMap::new(),
            threshold: threshold.max(1),
        }
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.edges.len() >= self.threshold
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId, t: f64) {
        let key = (u.min(v), u.max(v));
        let slot = self.edges.entry(key).or_insert(t);
        *slot = slot.max(t);
    }

    pub fn edge_time(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.edges.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.keys().copied()
    }

    pub fn clear(&mut self) {
        self.edges.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Absorbed {
    pub id: HyperedgeId,
    pub slot: SlotId,
    /// `t[E]`, the latest member recency of the absorbed hyperedge.
    pub t_last: f64,
}

/// One clique turned into a hyperedge during a flush.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeEvent {
    pub new_id: HyperedgeId,
    pub new_members: Vec<NodeId>,
    /// Sorted by hyperedge id.
    pub absorbed: Vec<Absorbed>,
    pub assigned_slot: SlotId,
    pub time: f64,
}

impl MergeEvent {
    /// The merge-log JSON line `{"t":..,"new":[..],"absorbed":[ids]}`.
    pub fn to_json_line(&self) -> String {
        let ids: Vec<u64> = self.absorbed.iter().map(|a| a.id.0).collect();
        serde_json::json!({ "t": self.time, "new": self.new_members, "absorbed": ids }).to_string()
    }
}

/// Homogeneous registry paired with its snapshot.
#[derive(Debug, Clone)]
pub struct HyperedgeBuilder {
    pub registry: HyperedgeRegistry,
    pub snapshot: Snapshot,
}

impl HyperedgeBuilder {
    pub fn new(num_nodes: usize, batch: usize) -> Self {
        HyperedgeBuilder {
            registry: HyperedgeRegistry::homogeneous(num_nodes),
            snapshot: Snapshot::new(batch),
        }
    }

    pub fn ingest(&mut self, u: NodeId, v: NodeId, t: f64) -> crate::Result<Ingest> {
        self.registry.ingest_link_homogeneous(&mut self.snapshot, u, v, t)
    }

    /// Flushes the trailing partial snapshot, if any.
    pub fn finish(&mut self, t: f64) -> Vec<MergeEvent> {
        if self.snapshot.is_empty() {
            return Vec::new();
        }
        self.registry.flush_snapshot(&mut self.snapshot, t)
    }
}
