//! Maximal clique enumeration (Bron–Kerbosch with Tomita pivoting over a
//! degeneracy ordering).

use std::collections::BTreeMap;

use crate::graph::NodeId;

/// Fixed-width bitset over the local vertex indices of one graph.
#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn empty(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn remove(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn and_not(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & !b).collect())
    }

    fn and_count(&self, other: &Bits) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones()).sum()
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let tz = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(w * 64 + tz)
                }
            })
        })
    }
}

/// Enumerates all maximal cliques of the simple undirected graph given by
/// `edges`. Self-loops and duplicate pairs are ignored. Output is sorted
/// by `(size, members)`, each clique's members ascending.
pub fn enumerate_maximal_cliques<I>(edges: I) -> Vec<Vec<NodeId>>
where
    I: IntoIterator<Item = (NodeId, NodeId)>,
{
    // local indices follow ascending node id
    let mut local: BTreeMap<NodeId, usize> = BTreeMap::new();
    let pairs: Vec<(NodeId, NodeId)> = edges.into_iter().filter(|(u, v)| u != v).collect();
    for &(u, v) in &pairs {
        local.insert(u, 0);
        local.insert(v, 0);
    }
    let nodes: Vec<NodeId> = local.keys().copied().collect();
    for (i, n) in nodes.iter().enumerate() {
        local.insert(*n, i);
    }
    let n = nodes.len();
    let mut adj = vec![Bits::empty(n); n];
    for &(u, v) in &pairs {
        let (a, b) = (local[&u], local[&v]);
        adj[a].insert(b);
        adj[b].insert(a);
    }

    let mut out: Vec<Vec<NodeId>> = Vec::new();
    let mut remaining = Bits::empty(n);
    for i in 0..n {
        remaining.insert(i);
    }
    let mut excluded = Bits::empty(n);
    let mut clique = Vec::new();
    for v in degeneracy_order(&adj) {
        let p = remaining.and(&adj[v]);
        let x = excluded.and(&adj[v]);
        clique.push(v);
        expand(&adj, &mut clique, p, x, &mut out, &nodes);
        clique.pop();
        remaining.remove(v);
        excluded.insert(v);
    }

    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn expand(
    adj: &[Bits],
    clique: &mut Vec<usize>,
    mut p: Bits,
    mut x: Bits,
    out: &mut Vec<Vec<NodeId>>,
    nodes: &[NodeId],
) {
    if p.is_empty() {
        if x.is_empty() {
            let mut c: Vec<NodeId> = clique.iter().map(|&i| nodes[i]).collect();
            c.sort_unstable();
            out.push(c);
        }
        return;
    }
    // pivot: the vertex of P ∪ X with most neighbors in P
    let pivot = p
        .iter()
        .chain(x.iter())
        .max_by_key(|&u| (adj[u].and_count(&p), std::cmp::Reverse(u)))
        .expect("P is non-empty");
    let candidates: Vec<usize> = p.and_not(&adj[pivot]).iter().collect();
    for v in candidates {
        clique.push(v);
        expand(adj, clique, p.and(&adj[v]), x.and(&adj[v]), out, nodes);
        clique.pop();
        p.remove(v);
        x.insert(v);
    }
}

/// Vertices in degeneracy order (repeatedly remove a minimum-degree vertex).
fn degeneracy_order(adj: &[Bits]) -> Vec<usize> {
    let n = adj.len();
    let mut degree: Vec<usize> = adj.iter().map(|a| a.iter().count()).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !removed[v])
            .min_by_key(|&v| (degree[v], v))
            .expect("vertices remain");
        removed[v] = true;
        order.push(v);
        for u in adj[v].iter() {
            if !removed[u] {
                degree[u] -= 1;
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_is_one_clique() {
        assert_eq!(enumerate_maximal_cliques([(1, 2), (2, 3), (1, 3)]), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn path_gives_its_edges() {
        assert_eq!(enumerate_maximal_cliques([(0, 1), (1, 2)]), vec![vec![0, 1], vec![1, 2]]);
    }

    #[test]
    fn empty_and_loops() {
        assert!(enumerate_maximal_cliques(Vec::new()).is_empty());
        assert!(enumerate_maximal_cliques([(3, 3)]).is_empty());
    }

    #[test]
    fn two_triangles_sharing_an_edge() {
        let got = enumerate_maximal_cliques([(1, 2), (1, 3), (2, 3), (1, 4), (2, 4)]);
        assert_eq!(got, vec![vec![1, 2, 3], vec![1, 2, 4]]);
    }

    #[test]
    fn wide_ids_cross_word_boundaries() {
        let mut edges = Vec::new();
        let members = [5, 70, 130, 200];
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                edges.push((a, b));
            }
        }
        edges.push((200, 1000));
        assert_eq!(enumerate_maximal_cliques(edges), vec![vec![200, 1000], vec![5, 70, 130, 200]]);
    }
}
