//! Event streams: loading, chronological splitting and temporal neighbor
//! queries.
//!
//! A [`TemporalGraph`] is immutable once built. Node ids are dense
//! (`0..num_nodes`); the original ids from the input file are kept in
//! [`TemporalGraph::original_ids`] so results can be mapped back.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Default edge-feature width used by the reference configuration.
pub const DEFAULT_EDGE_DIM: usize = 175;

/// One timestamped interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub src: NodeId,
    pub dst: NodeId,
    pub time: f64,
    pub feat: Option<Vec<f64>>,
}

impl Event {
    pub fn new(src: NodeId, dst: NodeId, time: f64) -> Self {
        Event {
            src,
            dst,
            time,
            feat: None,
        }
    }

    /// The edge feature, or a zero vector of width `d_e` when absent.
    pub fn feature_or_zero(&self, d_e: usize) -> Vec<f64> {
        match &self.feat {
            Some(f) => f.clone(),
            None => vec![0.0; d_e],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    #[default]
    Homogeneous,
    Bipartite,
}

/// How side-B nodes of a bipartite file are identified.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SideRule {
    /// Every destination id is a side-B node.
    #[default]
    DestinationIsSideB,
    /// A JSON sidecar `{"side_B": [ids...]}` listing original ids.
    Sidecar(PathBuf),
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub kind: GraphKind,
    pub d_e: usize,
    pub sides: SideRule,
}

/// Immutable event stream sorted by time, with a per-node adjacency index.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    events: Vec<Event>,
    num_nodes: usize,
    kind: GraphKind,
    side_b: Vec<bool>,
    d_e: usize,
    original_ids: Vec<u64>,
    // adjacency[u] = (time, other) in non-decreasing time order
    adjacency: Vec<Vec<(f64, NodeId)>>,
}

impl TemporalGraph {
    /// Builds a homogeneous graph from in-memory events. Events are stably
    /// sorted by time.
    pub fn homogeneous(num_nodes: usize, events: Vec<Event>, d_e: usize) -> Result<Self> {
        Self::build(num_nodes, events, GraphKind::Homogeneous, vec![false; num_nodes], d_e)
    }

    /// Builds a bipartite graph; `side_b[n]` marks the side-B (hyperedge)
    /// nodes. Every event must go from side A to side B.
    pub fn bipartite(
        num_nodes: usize,
        events: Vec<Event>,
        side_b: Vec<bool>,
        d_e: usize,
    ) -> Result<Self> {
        if side_b.len() != num_nodes {
            return Err(Error::InvalidParam(format!(
                "side_b has {} entries for {} nodes",
                side_b.len(),
                num_nodes
            )));
        }
        Self::build(num_nodes, events, GraphKind::Bipartite, side_b, d_e)
    }

    fn build(
        num_nodes: usize,
        mut events: Vec<Event>,
        kind: GraphKind,
        side_b: Vec<bool>,
        d_e: usize,
    ) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            for n in [e.src, e.dst] {
                if n >= num_nodes {
                    return Err(Error::NodeOutOfRange { node: n, num_nodes });
                }
            }
            if !(e.time >= 0.0) || !e.time.is_finite() {
                return Err(Error::NegativeTime {
                    line: i + 1,
                    time: e.time,
                });
            }
            if let Some(f) = &e.feat {
                if f.len() != d_e {
                    return Err(Error::FeatureLength {
                        line: i + 1,
                        expected: d_e,
                        found: f.len(),
                    });
                }
            }
            if kind == GraphKind::Bipartite && (side_b[e.src] || !side_b[e.dst]) {
                return Err(Error::SameSide { u: e.src, v: e.dst });
            }
        }
        // sort_by is stable: ties keep input order
        events.sort_by(|a, b| a.time.total_cmp(&b.time));

        let mut adjacency = vec![Vec::new(); num_nodes];
        for e in &events {
            adjacency[e.src].push((e.time, e.dst));
            if e.dst != e.src {
                adjacency[e.dst].push((e.time, e.src));
            }
        }
        Ok(TemporalGraph {
            events,
            num_nodes,
            kind,
            side_b,
            d_e,
            original_ids: (0..num_nodes as u64).collect(),
            adjacency,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn edge_dim(&self) -> usize {
        self.d_e
    }

    pub fn is_side_b(&self, n: NodeId) -> bool {
        self.side_b.get(n).copied().unwrap_or(false)
    }

    /// Side-B nodes in ascending id order (empty for homogeneous graphs).
    pub fn side_b_nodes(&self) -> Vec<NodeId> {
        (0..self.num_nodes).filter(|&n| self.side_b[n]).collect()
    }

    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    /// Returns a graph over the same node space holding `events[range]`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TemporalGraph {
        let events = self.events[range].to_vec();
        let mut adjacency = vec![Vec::new(); self.num_nodes];
        for e in &events {
            adjacency[e.src].push((e.time, e.dst));
            if e.dst != e.src {
                adjacency[e.dst].push((e.time, e.src));
            }
        }
        TemporalGraph {
            events,
            num_nodes: self.num_nodes,
            kind: self.kind,
            side_b: self.side_b.clone(),
            d_e: self.d_e,
            original_ids: self.original_ids.clone(),
            adjacency,
        }
    }

    /// The `cap` most recent distinct nodes that interacted with `u`
    /// strictly before `t`, most recent first, each with its latest
    /// interaction time before `t`.
    pub fn temporal_neighbors(&self, u: NodeId, t: f64, cap: usize) -> Result<Vec<(NodeId, f64)>> {
        if u >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node: u,
                num_nodes: self.num_nodes,
            });
        }
        Ok(self.neighbors_before(u, t, cap))
    }

    pub(crate) fn neighbors_before(&self, u: NodeId, t: f64, cap: usize) -> Vec<(NodeId, f64)> {
        let adj = &self.adjacency[u];
        let end = adj.partition_point(|&(time, _)| time < t);
        let mut out: Vec<(NodeId, f64)> = Vec::new();
        if cap == 0 {
            return out;
        }
        if cap <= 32 {
            for &(time, other) in adj[..end].iter().rev() {
                if !out.iter().any(|&(n, _)| n == other) {
                    out.push((other, time));
                    if out.len() == cap {
                        break;
                    }
                }
            }
        } else {
            let mut seen = HashSet::new();
            for &(time, other) in adj[..end].iter().rev() {
                if seen.insert(other) {
                    out.push((other, time));
                    if out.len() == cap {
                        break;
                    }
                }
            }
        }
        out
    }
}

/// Fractions for [`chronological_split`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let s = SplitSpec { train, val, test };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Split(format!("{name} fraction {f} not in (0,1)")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Split indices `(⌊n·train⌋, ⌊n·(train+val)⌋)`.
    pub fn boundaries(&self, n: usize) -> (usize, usize) {
        // the epsilon absorbs representation error such as 3 * (1/3)
        let cut = |f: f64| ((n as f64 * f) + 1e-9).floor() as usize;
        let a = cut(self.train).min(n);
        let b = cut(self.train + self.val).clamp(a, n);
        (a, b)
    }
}

/// Partitions `g` by event order into (train, val, test).
pub fn chronological_split(
    g: &TemporalGraph,
    s: &SplitSpec,
) -> Result<(TemporalGraph, TemporalGraph, TemporalGraph)> {
    s.validate()?;
    let n = g.len();
    if n == 0 {
        return Err(Error::Split("cannot split an empty graph".into()));
    }
    let (a, b) = s.boundaries(n);
    if n >= 3 {
        for (name, len) in [("train", a), ("val", b - a), ("test", n - b)] {
            if len == 0 {
                return Err(Error::Split(format!("{name} split is empty for {n} events")));
            }
        }
    }
    Ok((g.slice(0..a), g.slice(a..b), g.slice(b..n)))
}

#[derive(Deserialize)]
struct SideSidecar {
    #[serde(rename = "side_B")]
    side_b: Vec<u64>,
}

/// Loads an event CSV (`src,dst,t[,f1..f{d_e}]`) as a homogeneous or
/// bipartite graph (destination ids are side B).
pub fn load_events(path: impl AsRef<Path>, kind: GraphKind, d_e: usize) -> Result<TemporalGraph> {
    load_events_with(
        path,
        &LoadOptions {
            kind,
            d_e,
            sides: SideRule::DestinationIsSideB,
        },
    )
}

pub fn load_events_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<TemporalGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut raw: Vec<(u64, u64, f64, Option<Vec<f64>>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        // rows are numbered from the first data row; the header is row 0
        let line = idx;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if idx == 0 {
            if record.get(0) != Some("src") || record.get(1) != Some("dst") || record.get(2) != Some("t") {
                return Err(parse_err(line, "expected header `src,dst,t[,f1..]`".into()));
            }
            continue;
        }
        if record.len() < 3 {
            return Err(parse_err(line, format!("expected at least 3 fields, found {}", record.len())));
        }
        let id = |i: usize| -> Result<u64> {
            record[i]
                .parse::<u64>()
                .map_err(|e| parse_err(line, format!("bad node id {:?}: {e}", &record[i])))
        };
        let (src, dst) = (id(0)?, id(1)?);
        let time: f64 = record[2]
            .parse()
            .map_err(|e| parse_err(line, format!("bad timestamp {:?}: {e}", &record[2])))?;
        if !time.is_finite() {
            return Err(parse_err(line, format!("non-finite timestamp {time}")));
        }
        if time < 0.0 {
            return Err(Error::NegativeTime { line, time });
        }
        let n_feat = record.len() - 3;
        let feat = if n_feat == 0 {
            None
        } else {
            if n_feat != opts.d_e {
                return Err(Error::FeatureLength {
                    line,
                    expected: opts.d_e,
                    found: n_feat,
                });
            }
            let f = (3..record.len())
                .map(|i| {
                    record[i]
                        .parse::<f64>()
                        .map_err(|e| parse_err(line, format!("bad feature {:?}: {e}", &record[i])))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(f)
        };
        raw.push((src, dst, time, feat));
    }

    // Dense ids follow ascending original id, so re-loading a serialized
    // graph is the identity.
    let mut ids: BTreeSet<u64> = raw.iter().flat_map(|r| [r.0, r.1]).collect();
    let mut side_b_orig: BTreeSet<u64> = BTreeSet::new();
    if opts.kind == GraphKind::Bipartite {
        match &opts.sides {
            SideRule::DestinationIsSideB => {
                side_b_orig.extend(raw.iter().map(|r| r.1));
            }
            SideRule::Sidecar(p) => {
                let s = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let sc: SideSidecar = serde_json::from_str(&s)?;
                side_b_orig.extend(sc.side_b.iter().copied());
                ids.extend(sc.side_b);
            }
        }
        for r in &raw {
            if side_b_orig.contains(&r.0) {
                return Err(Error::BipartiteViolation { node: r.0 });
            }
            if !side_b_orig.contains(&r.1) {
                return Err(Error::BipartiteViolation { node: r.1 });
            }
        }
    }
    let original_ids: Vec<u64> = ids.into_iter().collect();
    let dense = |orig: u64| original_ids.binary_search(&orig).expect("id collected above");

    let events: Vec<Event> = raw
        .into_iter()
        .map(|(s, d, time, feat)| Event {
            src: dense(s),
            dst: dense(d),
            time,
            feat,
        })
        .collect();
    let num_nodes = original_ids.len();
    let mut g = match opts.kind {
        GraphKind::Homogeneous => TemporalGraph::homogeneous(num_nodes, events, opts.d_e)?,
        GraphKind::Bipartite => {
            let side_b = original_ids.iter().map(|o| side_b_orig.contains(o)).collect();
            TemporalGraph::bipartite(num_nodes, events, side_b, opts.d_e)?
        }
    };
    g.original_ids = original_ids;
    Ok(g)
}

/// Writes `g` as an event CSV using dense node ids.
pub fn write_events(g: &TemporalGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("src,dst,t");
    for i in 1..=g.d_e {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for e in &g.events {
        out.push_str(&format!("{},{},{}", e.src, e.dst, e.time));
        if let Some(f) = &e.feat {
            for x in f {
                out.push_str(&format!(",{x}"));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the dense → original id table as JSON.
pub fn write_id_remap(g: &TemporalGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::json!({ "original_ids": g.original_ids });
    fs::write(path, serde_json::to_string(&body)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_empty_graph() {
        let f = csv_file("");
        let g = load_events(f.path(), GraphKind::Homogeneous, 0).unwrap();
        assert_eq!(g.len(), 0);
        assert_eq!(g.num_nodes(), 0);
    }

    #[test]
    fn rows_are_sorted_by_time() {
        let f = csv_file("src,dst,t\n0,1,5.0\n2,3,1.0\n");
        let g = load_events(f.path(), GraphKind::Homogeneous, 0).unwrap();
        let times: Vec<f64> = g.events().iter().map(|e| e.time).collect();
        assert_eq!(times, vec![1.0, 5.0]);
    }

    #[test]
    fn ties_keep_file_order() {
        let f = csv_file("src,dst,t\n0,1,2.0\n4,5,1.0\n2,3,2.0\n");
        let g = load_events(f.path(), GraphKind::Homogeneous, 0).unwrap();
        let srcs: Vec<usize> = g.events().iter().map(|e| e.src).collect();
        assert_eq!(srcs, vec![4, 0, 2]);
    }

    #[test]
    fn short_feature_row_names_its_line() {
        let f = csv_file("src,dst,t,f1,f2\n0,1,1.0,0.1,0.2\n1,2,2.0,0.3,0.4\n2,3,3.0,0.5\n");
        let err = load_events(f.path(), GraphKind::Homogeneous, 2).unwrap_err();
        match err {
            Error::FeatureLength { line, expected, found } => {
                assert_eq!((line, expected, found), (3, 2, 1));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_timestamp_rejected() {
        let f = csv_file("src,dst,t\n0,1,-1.0\n");
        assert!(matches!(
            load_events(f.path(), GraphKind::Homogeneous, 0),
            Err(Error::NegativeTime { .. })
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = csv_file("src,dst,t\n0,1,1.0\n0,x,2.0\n");
        match load_events(f.path(), GraphKind::Homogeneous, 0).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bipartite_node_on_both_sides_rejected() {
        let f = csv_file("src,dst,t\n0,1,1.0\n1,2,2.0\n");
        assert!(matches!(
            load_events(f.path(), GraphKind::Bipartite, 0),
            Err(Error::BipartiteViolation { node: 1 })
        ));
    }

    #[test]
    fn bipartite_sidecar_adds_untouched_side_b_nodes() {
        let f = csv_file("src,dst,t\n10,20,1.0\n");
        let mut side = tempfile::NamedTempFile::new().unwrap();
        side.write_all(br#"{"side_B": [20, 30]}"#).unwrap();
        let g = load_events_with(
            f.path(),
            &LoadOptions {
                kind: GraphKind::Bipartite,
                d_e: 0,
                sides: SideRule::Sidecar(side.path().to_path_buf()),
            },
        )
        .unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.original_ids(), &[10, 20, 30]);
        assert_eq!(g.side_b_nodes(), vec![1, 2]);
    }

    #[test]
    fn split_sizes_follow_floor_arithmetic() {
        let events = (0..10).map(|i| Event::new(0, 1, i as f64)).collect();
        let g = TemporalGraph::homogeneous(2, events, 0).unwrap();
        let (a, b, c) = chronological_split(&g, &SplitSpec::default()).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 1, 2));

        let events = (0..3).map(|i| Event::new(0, 1, i as f64)).collect();
        let g = TemporalGraph::homogeneous(2, events, 0).unwrap();
        let third = 1.0 / 3.0;
        let (a, b, c) = chronological_split(&g, &SplitSpec { train: third, val: third, test: third }).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (1, 1, 1));
    }

    #[test]
    fn degenerate_splits_rejected() {
        let events = (0..5).map(|i| Event::new(0, 1, i as f64)).collect();
        let g = TemporalGraph::homogeneous(2, events, 0).unwrap();
        assert!(SplitSpec::new(1.0, 0.0, 0.0).is_err());
        let s = SplitSpec { train: 1.0, val: 0.0, test: 0.0 };
        assert!(chronological_split(&g, &s).is_err());
        // 0.1 of 5 events floors to an empty train split
        let s = SplitSpec { train: 0.1, val: 0.45, test: 0.45 };
        assert!(chronological_split(&g, &s).is_err());
    }

    #[test]
    fn neighbor_recency_and_strictness() {
        let (u, a, b) = (0, 1, 2);
        let events = vec![Event::new(u, a, 1.0), Event::new(u, b, 2.0), Event::new(u, a, 3.0)];
        let g = TemporalGraph::homogeneous(3, events, 0).unwrap();
        assert_eq!(g.temporal_neighbors(u, 4.0, 2).unwrap(), vec![(a, 3.0), (b, 2.0)]);
        assert_eq!(g.temporal_neighbors(u, 3.0, 2).unwrap(), vec![(b, 2.0), (a, 1.0)]);
        assert!(g.temporal_neighbors(u, 1.0, 2).unwrap().is_empty());
        assert!(g.temporal_neighbors(7, 1.0, 2).is_err());
    }
}
