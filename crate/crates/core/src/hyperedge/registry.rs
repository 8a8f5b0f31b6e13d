use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::{enumerate_maximal_cliques, Absorbed, Hyperedge, HyperedgeId, MergeEvent, SlotPool, Snapshot};
use crate::error::{Error, Result};
use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub enum RegistryMode {
    Homogeneous,
    /// `owner[v]` is the fixed hyperedge of side-B node `v`.
    Bipartite { owner: Vec<Option<HyperedgeId>> },
}

/// Result of one homogeneous ingestion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingest {
    pub new_pair: Option<HyperedgeId>,
    pub merges: Vec<MergeEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BipartiteDelta {
    pub hyperedge: HyperedgeId,
    /// `u` was not a member before this link.
    pub joined: bool,
    pub evicted: Option<NodeId>,
}

/// Live hyperedges with the membership map `H[n]` and recency map
/// `t[n, E]`.
#[derive(Debug, Clone)]
pub struct HyperedgeRegistry {
    mode: RegistryMode,
    num_nodes: usize,
    live: BTreeMap<HyperedgeId, Hyperedge>,
    membership: Vec<BTreeSet<HyperedgeId>>,
    recency: HashMap<(NodeId, HyperedgeId), f64>,
    pool: SlotPool,
    next_id: u64,
    peak_slots: usize,
}

#[derive(Serialize)]
struct DumpLine<'a> {
    id: u64,
    members: &'a [NodeId],
    slot: usize,
    t_last: f64,
}

impl HyperedgeRegistry {
    pub fn homogeneous(num_nodes: usize) -> Self {
        HyperedgeRegistry {
            mode: RegistryMode::Homogeneous,
            num_nodes,
            live: BTreeMap::new(),
            membership: vec![BTreeSet::new(); num_nodes],
            recency: HashMap::new(),
            pool: SlotPool::default(),
            next_id: 0,
            peak_slots: 0,
        }
    }

    /// One empty hyperedge per side-B node, slots `0..side_b.len()` in the
    /// given order.
    pub fn bipartite(num_nodes: usize, side_b: &[NodeId]) -> Result<Self> {
        let mut owner = vec![None; num_nodes];
        let mut live = BTreeMap::new();
        let mut pool = SlotPool::default();
        for (i, &v) in side_b.iter().enumerate() {
            if v >= num_nodes {
                return Err(Error::NodeOutOfRange { node: v, num_nodes });
            }
            let id = HyperedgeId(i as u64);
            owner[v] = Some(id);
            live.insert(
                id,
                Hyperedge {
                    id,
                    members: Vec::new(),
                    slot: pool.claim(),
                    created_at: 0.0,
                },
            );
        }
        Ok(HyperedgeRegistry {
            mode: RegistryMode::Bipartite { owner },
            num_nodes,
            live,
            membership: vec![BTreeSet::new(); num_nodes],
            recency: HashMap::new(),
            pool,
            next_id: side_b.len() as u64,
            peak_slots: side_b.len(),
        })
    }

    pub fn mode(&self) -> &RegistryMode {
        &self.mode
    }

    pub fn is_bipartite(&self) -> bool {
        matches!(self.mode, RegistryMode::Bipartite { .. })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn peak_slots(&self) -> usize {
        self.peak_slots
    }

    pub fn slot_capacity(&self) -> usize {
        self.pool.capacity()
    }

    pub fn free_slots(&self) -> usize {
        self.pool.free_count()
    }

    pub fn hyperedges(&self) -> impl Iterator<Item = &Hyperedge> {
        self.live.values()
    }

    pub fn get(&self, id: HyperedgeId) -> Option<&Hyperedge> {
        self.live.get(&id)
    }

    /// `H[n]` in ascending id order.
    pub fn hyperedges_of(&self, n: NodeId) -> &BTreeSet<HyperedgeId> {
        &self.membership[n]
    }

    /// `t[n, E]`.
    pub fn recency(&self, n: NodeId, id: HyperedgeId) -> Option<f64> {
        self.recency.get(&(n, id)).copied()
    }

    /// Sets `t[n, E]` for an existing membership.
    pub fn touch(&mut self, n: NodeId, id: HyperedgeId, t: f64) -> Result<()> {
        match self.recency.get_mut(&(n, id)) {
            Some(r) => {
                *r = t;
                Ok(())
            }
            None => Err(Error::Consistency(format!("node {n} is not a member of {id}"))),
        }
    }

    /// `t[E] = max_n t[n, E]`; the creation time for an empty hyperedge.
    pub fn t_last(&self, id: HyperedgeId) -> Option<f64> {
        let e = self.live.get(&id)?;
        Some(
            e.members
                .iter()
                .filter_map(|&n| self.recency(n, id))
                .fold(e.created_at, f64::max),
        )
    }

    /// The fixed hyperedge `E[v]` of a side-B node.
    pub fn owned_hyperedge(&self, v: NodeId) -> Option<HyperedgeId> {
        match &self.mode {
            RegistryMode::Bipartite { owner } => owner.get(v).copied().flatten(),
            RegistryMode::Homogeneous => None,
        }
    }

    fn check_node(&self, n: NodeId) -> Result<()> {
        if n >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node: n,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }

    fn fresh_id(&mut self) -> HyperedgeId {
        let id = HyperedgeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn insert_live(&mut self, members: Vec<NodeId>, times: &[f64], t: f64) -> HyperedgeId {
        let id = self.fresh_id();
        let slot = self.pool.claim();
        for (&n, &tn) in members.iter().zip(times) {
            self.membership[n].insert(id);
            self.recency.insert((n, id), tn);
        }
        self.live.insert(
            id,
            Hyperedge {
                id,
                members,
                slot,
                created_at: t,
            },
        );
        self.peak_slots = self.peak_slots.max(self.live.len());
        id
    }

    fn remove_live(&mut self, id: HyperedgeId) -> Option<Hyperedge> {
        let e = self.live.remove(&id)?;
        for &n in &e.members {
            self.membership[n].remove(&id);
            self.recency.remove(&(n, id));
        }
        self.pool.release(e.slot);
        Some(e)
    }

    fn shared_hyperedges(&self, u: NodeId, v: NodeId) -> Vec<HyperedgeId> {
        self.membership[u].intersection(&self.membership[v]).copied().collect()
    }

    /// Receives link `(u, v)` at time `t`. A pair hyperedge is opened unless
    /// `u` and `v` already share a live hyperedge; the link then enters the
    /// snapshot, which is flushed once it is full.
    pub fn ingest_link_homogeneous(
        &mut self,
        snap: &mut Snapshot,
        u: NodeId,
        v: NodeId,
        t: f64,
    ) -> Result<Ingest> {
        if self.is_bipartite() {
            return Err(Error::WrongMode { expected: "homogeneous" });
        }
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        let shared = self.shared_hyperedges(u, v);
        let new_pair = if shared.is_empty() {
            let members = vec![u.min(v), u.max(v)];
            Some(self.insert_live(members, &[t, t], t))
        } else {
            for id in shared {
                self.recency.insert((u, id), t);
                self.recency.insert((v, id), t);
            }
            None
        };
        snap.add_edge(u, v, t);
        let merges = if snap.is_full() {
            self.flush_snapshot(snap, t)
        } else {
            Vec::new()
        };
        self.debug_check();
        Ok(Ingest { new_pair, merges })
    }

    /// Turns every maximal clique of size ≥ 3 in `snap` into a hyperedge,
    /// absorbing the live hyperedges it contains, then empties `snap`.
    ///
    /// A clique strictly contained in a live hyperedge is dropped so the
    /// live member sets stay an antichain.
    pub fn flush_snapshot(&mut self, snap: &mut Snapshot, t_star: f64) -> Vec<MergeEvent> {
        let cliques = enumerate_maximal_cliques(snap.edges());
        let mut merges = Vec::new();
        for c in cliques.into_iter().filter(|c| c.len() >= 3) {
            let contained_in_larger = self.membership[c[0]].iter().any(|id| {
                let e = &self.live[id];
                e.len() > c.len() && c.iter().all(|&n| e.contains(n))
            });
            if contained_in_larger {
                continue;
            }
            let candidates: BTreeSet<HyperedgeId> =
                c.iter().flat_map(|&n| self.membership[n].iter().copied()).collect();
            let absorbed: Vec<Absorbed> = candidates
                .into_iter()
                .filter(|id| self.live[id].is_subset_of(&c))
                .map(|id| Absorbed {
                    id,
                    slot: self.live[&id].slot,
                    t_last: self.t_last(id).expect("live"),
                })
                .collect();
            for a in &absorbed {
                self.remove_live(a.id);
            }
            // t[n, c]: latest snapshot link between n and another member
            let times: Vec<f64> = c
                .iter()
                .map(|&n| {
                    c.iter()
                        .filter(|&&m| m != n)
                        .filter_map(|&m| snap.edge_time(n, m))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let new_id = self.insert_live(c.clone(), &times, t_star);
            merges.push(MergeEvent {
                new_id,
                new_members: c,
                absorbed,
                assigned_slot: self.live[&new_id].slot,
                time: t_star,
            });
        }
        snap.clear();
        self.debug_check();
        merges
    }

    /// Adds side-A node `u` to `E[v]`; if `E[v]` then exceeds `capacity`,
    /// the member with the largest gap since its last link to `v` is
    /// evicted when that gap exceeds `t_prime`.
    pub fn ingest_link_bipartite(
        &mut self,
        u: NodeId,
        v: NodeId,
        t: f64,
        capacity: usize,
        t_prime: f64,
    ) -> Result<BipartiteDelta> {
        self.check_node(u)?;
        self.check_node(v)?;
        let RegistryMode::Bipartite { owner } = &self.mode else {
            return Err(Error::WrongMode { expected: "bipartite" });
        };
        let id = match (owner[u], owner[v]) {
            (None, Some(id)) => id,
            _ => return Err(Error::SameSide { u, v }),
        };
        let e = self.live.get_mut(&id).expect("fixed hyperedges stay live");
        let joined = match e.members.binary_search(&u) {
            Ok(_) => false,
            Err(pos) => {
                e.members.insert(pos, u);
                true
            }
        };
        self.membership[u].insert(id);
        self.recency.insert((u, id), t);

        let mut evicted = None;
        let e = &self.live[&id];
        if e.len() > capacity {
            // largest gap; ties go to the smallest node id
            let (o, gap) = e
                .members
                .iter()
                .map(|&n| (n, t - self.recency[&(n, id)]))
                .fold(None, |best: Option<(NodeId, f64)>, (n, g)| match best {
                    Some((_, bg)) if bg >= g => best,
                    _ => Some((n, g)),
                })
                .expect("non-empty");
            if gap > t_prime {
                self.remove_member(o, id);
                evicted = Some(o);
            }
        }
        self.debug_check();
        Ok(BipartiteDelta {
            hyperedge: id,
            joined,
            evicted,
        })
    }

    fn remove_member(&mut self, n: NodeId, id: HyperedgeId) {
        if let Some(e) = self.live.get_mut(&id) {
            if let Ok(pos) = e.members.binary_search(&n) {
                e.members.remove(pos);
            }
        }
        self.membership[n].remove(&id);
        self.recency.remove(&(n, id));
    }

    /// Drops every membership with `t_star − t[n,E] > t_prime`. Hyperedges
    /// and their slots persist even when emptied.
    pub fn prune_stale_memberships(&mut self, t_star: f64, t_prime: f64) -> Result<Vec<(NodeId, HyperedgeId)>> {
        if !self.is_bipartite() {
            return Err(Error::WrongMode { expected: "bipartite" });
        }
        let mut stale: Vec<(NodeId, HyperedgeId)> = self
            .recency
            .iter()
            .filter(|(_, &t)| t_star - t > t_prime)
            .map(|(&k, _)| k)
            .collect();
        stale.sort();
        for &(n, id) in &stale {
            self.remove_member(n, id);
        }
        self.debug_check();
        Ok(stale)
    }

    /// Membership/recency consistency, slot uniqueness, and (homogeneous)
    /// the pair-minimum and antichain invariants.
    pub fn check_invariants(&self) -> Result<()> {
        self.check_consistency()?;
        if !self.is_bipartite() {
            self.check_antichain()?;
        }
        Ok(())
    }

    pub fn check_consistency(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Consistency(m));
        let mut pairs = 0usize;
        let mut slots = BTreeSet::new();
        for (id, e) in &self.live {
            if !slots.insert(e.slot) {
                return fail(format!("slot {:?} shared", e.slot));
            }
            if !self.is_bipartite() && e.len() < 2 {
                return fail(format!("{id} has {} members", e.len()));
            }
            if e.members.windows(2).any(|w| w[0] >= w[1]) {
                return fail(format!("{id} members not strictly ascending"));
            }
            for &n in &e.members {
                if !self.membership[n].contains(id) {
                    return fail(format!("{id} lists {n} but H[{n}] lacks it"));
                }
                if !self.recency.contains_key(&(n, *id)) {
                    return fail(format!("t[{n},{id}] missing"));
                }
                pairs += 1;
            }
        }
        for (n, hs) in self.membership.iter().enumerate() {
            for id in hs {
                match self.live.get(id) {
                    Some(e) if e.contains(n) => {}
                    _ => return fail(format!("H[{n}] holds {id} without membership")),
                }
            }
        }
        if self.recency.len() != pairs {
            return fail(format!("{} recency entries for {pairs} memberships", self.recency.len()));
        }
        if self.is_bipartite() {
            if self.pool.free_count() + self.live.len() != self.pool.capacity() {
                return fail("bipartite slot count drifted".into());
            }
        } else if self.pool.free_count() + self.live.len() != self.pool.capacity() {
            return fail("slot pool out of sync".into());
        }
        Ok(())
    }

    /// No live member set is a strict subset of another.
    pub fn check_antichain(&self) -> Result<()> {
        for e in self.live.values() {
            let Some(&first) = e.members.first() else { continue };
            for other_id in &self.membership[first] {
                let other = &self.live[other_id];
                if other.id != e.id && other.len() > e.len() && e.is_subset_of(&other.members) {
                    return Err(Error::Consistency(format!("{} ⊂ {}", e.id, other.id)));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn debug_check(&self) {
        #[cfg(debug_assertions)]
        if let Err(e) = self.check_consistency() {
            panic!("{e}");
        }
    }

    /// JSON-lines dump, one object per live hyperedge in id order.
    pub fn dump_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.live.values() {
            let line = DumpLine {
                id: e.id.0,
                members: &e.members,
                slot: e.slot.0,
                t_last: self.t_last(e.id).expect("live"),
            };
            out.push_str(&serde_json::to_string(&line).expect("plain data"));
            out.push('\n');
        }
        out
    }
}
