//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use htgn::graph::NodeId;
use htgn::htsbm::{sample_htsbm, Activation, HtsbmParams, PlantedSpec};
use htgn::hyperedge::HyperedgeBuilder;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random homogeneous stream: non-decreasing times with frequent ties,
/// links biased towards small groups so cliques actually form.
pub fn random_stream(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<(NodeId, NodeId, f64)> {
    let group = rng.gen_range(2..=6usize);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        if !rng.gen_bool(0.3) {
            t += rng.gen_range(0.0..2.0);
        }
        let u = rng.gen_range(0..n);
        let v = if rng.gen_bool(0.6) {
            let base = u - u % group;
            rng.gen_range(base..(base + group).min(n))
        } else {
            rng.gen_range(0..n)
        };
        if u != v {
            out.push((u, v, t));
        }
    }
    out
}

/// Feeds `events` through a builder with snapshot size `b`, checking the
/// structural invariants after every ingestion and after the final flush.
pub fn check_stream(n: usize, b: usize, events: &[(NodeId, NodeId, f64)]) -> Result<(), String> {
    let mut bld = HyperedgeBuilder::new(n, b);
    for (i, &(u, v, t)) in events.iter().enumerate() {
        let live_before = bld.registry.live_count();
        let ing = bld.ingest(u, v, t).map_err(|e| format!("event {i}: {e}"))?;
        let freed: usize = ing.merges.iter().map(|m| m.absorbed.len()).sum();
        let claimed = ing.merges.len() + usize::from(ing.new_pair.is_some());
        if bld.registry.live_count() + freed != live_before + claimed {
            return Err(format!("event {i}: slot accounting off ({claimed} claimed, {freed} freed)"));
        }
        for x in [u, v] {
            if bld.registry.hyperedges_of(x).is_empty() {
                return Err(format!("event {i}: node {x} uncovered"));
            }
        }
        bld.registry.check_invariants().map_err(|e| format!("event {i}: {e}"))?;
    }
    let before = bld.registry.live_count();
    let merges = bld.finish(events.last().map_or(0.0, |e| e.2));
    let freed: usize = merges.iter().map(|m| m.absorbed.len()).sum();
    if bld.registry.live_count() + freed != before + merges.len() {
        return Err("final flush: slot accounting off".into());
    }
    bld.registry.check_invariants().map_err(|e| format!("final flush: {e}"))
}

/// Random simple graph on `n` nodes with edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Maximal cliques (size ≥ 2) by checking every vertex subset.
pub fn brute_force_cliques(n: usize, edges: &[(NodeId, NodeId)]) -> Vec<Vec<NodeId>> {
    assert!(n <= 16);
    let adj: BTreeSet<(NodeId, NodeId)> = edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
    let is_clique = |mask: u32| {
        let ns: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        ns.iter().enumerate().all(|(k, &a)| ns[k + 1..].iter().all(|&b| adj.contains(&(a, b))))
    };
    let cliques: Vec<u32> = (1u32..1 << n).filter(|&m| m.count_ones() >= 2 && is_clique(m)).collect();
    let mut out: Vec<Vec<NodeId>> = cliques
        .iter()
        .filter(|&&m| (0..n).all(|i| m >> i & 1 == 1 || !is_clique(m | 1 << i)))
        .map(|&m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect();
    out.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
    out
}

/// Generator settings of the learning-signal dataset: 100 nodes in 20
/// communities of 5 with background links inside communities, plus each
/// community repeatedly replayed as a 5-node group burst.
pub fn learning_dataset(seed: u64) -> htgn::graph::TemporalGraph {
    const REPEATS: usize = 20;
    let mut p = HtsbmParams::blocks(100, 20, 1.0, 0.0);
    p.noise_scale = 7.9;
    p.planted = (0..20)
        .flat_map(|c| {
            (0..REPEATS).map(move |_| PlantedSpec {
                members: (5 * c..5 * c + 5).collect(),
                activation: Some(Activation::Uniform { lo: 0.0, hi: 1000.0 }),
            })
        })
        .collect();
    sample_htsbm(&p, seed).expect("valid generator settings").graph
}
