//! Hypergraph temporal stochastic block model.
//!
//! Nodes fall into `K` communities. Background pair events arrive as an
//! inhomogeneous Poisson stream with pair intensity
//! `noise_scale · Λ₀[c(i), c(j)] · π(t)`, `π(t) = λ·e^{−λt}`, sampled by
//! thinning. Planted hyperedges are synchronized bursts: every member pair
//! interacts once within `jitter` of a shared activation time.
//!
//! [`duration_sweep`] runs hyperedge construction over sampled streams for
//! several snapshot sizes and scores the recovered hyperedges against the
//! planted ones.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Event, NodeId, TemporalGraph};
use crate::hyperedge::HyperedgeBuilder;

const DURATION_LEAK: f64 = 0.05;
const DURATION_NOISE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Fixed { at: f64 },
    /// Uniform over `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub members: Vec<NodeId>,
    /// Defaults to uniform over `[0, horizon − jitter)`.
    #[serde(default)]
    pub activation: Option<Activation>,
}

/// Planted hyperedges drawn per sample: `count` disjoint sets of `size`
/// nodes, each inside one community (round-robin over communities unless
/// `community` pins them all to one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPlanted {
    pub count: usize,
    pub size: usize,
    #[serde(default)]
    pub community: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HtsbmParams {
    pub n: usize,
    pub k: usize,
    /// Community of each node; contiguous equal blocks when absent.
    #[serde(default)]
    pub community_of: Option<Vec<usize>>,
    pub lambda0: Vec<Vec<f64>>,
    /// Rate of the exponential density `π`.
    pub lambda: f64,
    #[serde(default)]
    pub planted: Vec<PlantedSpec>,
    #[serde(default)]
    pub random_planted: Option<RandomPlanted>,
    pub noise_scale: f64,
    pub horizon: f64,
    /// Width of a planted burst.
    pub jitter: f64,
}

impl HtsbmParams {
    /// `n` nodes in `k` blocks with `Λ₀ = within` on the diagonal and
    /// `between` elsewhere.
    pub fn blocks(n: usize, k: usize, within: f64, between: f64) -> Self {
        let lambda0 = (0..k)
            .map(|a| (0..k).map(|b| if a == b { within } else { between }).collect())
            .collect();
        HtsbmParams {
            n,
            k,
            community_of: None,
            lambda0,
            lambda: 1e-3,
            planted: Vec::new(),
            random_planted: None,
            noise_scale: 1.0,
            horizon: 1000.0,
            jitter: 1e-3,
        }
    }

    /// The configuration used by the snapshot-duration experiment: 60
    /// nodes, 3 communities, 10 planted triangles.
    ///
    /// Communities 0 and 1 (15 nodes each) carry the bulk of the background
    /// as a bipartite stream, so it never closes triangles by itself.
    /// Community 2 (30 nodes) hosts the planted triangles and only sees a
    /// trickle of background links; those links are what longer snapshots
    /// turn into spurious cliques.
    pub fn duration_experiment() -> Self {
        let leak = DURATION_LEAK;
        let mut p = HtsbmParams::blocks(60, 3, 0.0, 0.0);
        p.community_of = Some((0..60).map(|i| if i < 15 { 0 } else if i < 30 { 1 } else { 2 }).collect());
        p.lambda0 = vec![vec![0.0, 1.0, leak], vec![1.0, 0.0, leak], vec![leak, leak, 0.0]];
        p.random_planted = Some(RandomPlanted { count: 10, size: 3, community: Some(2) });
        p.noise_scale = DURATION_NOISE;
        p
    }

    /// Default snapshot sizes for the duration experiment: 1×, 15×, 25×,
    /// 35× and 50× the burst width of a triangle.
    pub fn duration_grid() -> Vec<usize> {
        vec![3, 45, 75, 105, 150]
    }

    pub fn community(&self, node: NodeId) -> usize {
        match &self.community_of {
            Some(c) => c[node],
            None => node * self.k / self.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return bad(format!("need 0 < k ≤ n, got n={} k={}", self.n, self.k));
        }
        if self.lambda0.len() != self.k || self.lambda0.iter().any(|r| r.len() != self.k) {
            return bad(format!("lambda0 must be {0}x{0}", self.k));
        }
        for a in 0..self.k {
            for b in 0..self.k {
                let x = self.lambda0[a][b];
                if !(0.0..=1.0).contains(&x) {
                    return bad(format!("lambda0[{a}][{b}] = {x} outside [0,1]"));
                }
                if x != self.lambda0[b][a] {
                    return bad("lambda0 must be symmetric".into());
                }
            }
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.noise_scale >= 0.0) || !(self.horizon > 0.0) || !(self.jitter >= 0.0) {
            return bad("noise_scale, jitter must be ≥ 0 and horizon > 0".into());
        }
        if self.jitter >= self.horizon {
            return bad("jitter must be smaller than the horizon".into());
        }
        if let Some(c) = &self.community_of {
            if c.len() != self.n || c.iter().any(|&x| x >= self.k) {
                return bad("community_of must assign each node a community < k".into());
            }
        }
        for p in &self.planted {
            if p.members.len() < 3 {
                return bad(format!("planted set {:?} has fewer than 3 members", p.members));
            }
            if p.members.iter().any(|&m| m >= self.n) {
                return bad(format!("planted set {:?} has out-of-range node", p.members));
            }
            let c = self.community(p.members[0]);
            if p.members.iter().any(|&m| self.community(m) != c) {
                return bad(format!("planted set {:?} spans communities", p.members));
            }
        }
        if let Some(r) = self.random_planted {
            if r.size < 3 {
                return bad("random_planted.size must be ≥ 3".into());
            }
            if r.community.is_some_and(|c| c >= self.k) {
                return bad("random_planted.community must be < k".into());
            }
        }
        Ok(())
    }

    fn max_lambda0(&self) -> f64 {
        self.lambda0.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Expected background events over `[0, horizon]`:
    /// `noise_scale · Σ_{i<j} Λ₀[c(i),c(j)] · (1 − e^{−λ·horizon})`.
    pub fn expected_background(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                s += self.lambda0[self.community(i)][self.community(j)];
            }
        }
        self.noise_scale * s * (1.0 - (-self.lambda * self.horizon).exp())
    }
}

#[derive(Debug, Clone)]
pub struct HtsbmSample {
    pub graph: TemporalGraph,
    /// Ascending member lists.
    pub planted: Vec<Vec<NodeId>>,
    pub background_events: usize,
    pub warnings: Vec<String>,
}

pub fn sample_htsbm(p: &HtsbmParams, seed: u64) -> Result<HtsbmSample> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut planted: Vec<(Vec<NodeId>, Option<Activation>)> = p
        .planted
        .iter()
        .map(|s| {
            let mut m = s.members.clone();
            m.sort_unstable();
            (m, s.activation.clone())
        })
        .collect();
    if let Some(r) = p.random_planted {
        for m in draw_disjoint_sets(p, r, &mut rng)? {
            planted.push((m, None));
        }
    }

    let mut events = Vec::new();
    for (members, act) in &planted {
        let tau = match act {
            Some(Activation::Fixed { at }) => *at,
            Some(Activation::Uniform { lo, hi }) => rng.gen_range(*lo..*hi),
            None => rng.gen_range(0.0..p.horizon - p.jitter),
        };
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                let dt = if p.jitter > 0.0 { rng.gen_range(0.0..p.jitter) } else { 0.0 };
                events.push(Event::new(a, b, (tau + dt).clamp(0.0, p.horizon)));
            }
        }
    }

    // Thinning against the homogeneous majorant λ·noise·max(Λ₀) per pair,
    // superposed over all pairs.
    let n_pairs = p.n * (p.n - 1) / 2;
    let max_l0 = p.max_lambda0();
    let majorant = n_pairs as f64 * p.lambda * p.noise_scale * max_l0;
    let mut background = 0;
    if majorant > 0.0 {
        let mut t = 0.0;
        loop {
            let u: f64 = rng.gen();
            t += -(1.0 - u).ln() / majorant;
            if t > p.horizon {
                break;
            }
            let pair = rng.gen_range(0..n_pairs);
            let (i, j) = unrank_pair(pair, p.n);
            let accept = p.lambda0[p.community(i)][p.community(j)] * (-p.lambda * t).exp() / max_l0;
            if rng.gen::<f64>() < accept {
                events.push(Event::new(i, j, t));
                background += 1;
            }
        }
    }

    let mut warnings = Vec::new();
    if events.is_empty() {
        warnings.push(format!(
            "no events sampled (horizon {} with lambda {}, noise {})",
            p.horizon, p.lambda, p.noise_scale
        ));
    }
    let graph = TemporalGraph::homogeneous(p.n, events, 0)?;
    Ok(HtsbmSample {
        graph,
        planted: planted.into_iter().map(|(m, _)| m).collect(),
        background_events: background,
        warnings,
    })
}

/// Maps `0..n(n−1)/2` onto pairs `i < j` in row-major order.
fn unrank_pair(mut r: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if r < row {
            return (i, i + 1 + r);
        }
        r -= row;
        i += 1;
    }
}

fn draw_disjoint_sets(p: &HtsbmParams, r: RandomPlanted, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<NodeId>>> {
    let used: BTreeSet<NodeId> = p.planted.iter().flat_map(|s| s.members.iter().copied()).collect();
    let mut pools: Vec<Vec<NodeId>> = vec![Vec::new(); p.k];
    for n in (0..p.n).filter(|n| !used.contains(n)) {
        pools[p.community(n)].push(n);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let mut out = Vec::with_capacity(r.count);
    for i in 0..r.count {
        // round-robin over communities that can still host a set
        let c = (0..p.k)
            .map(|o| (i + o) % p.k)
            .filter(|&c| r.community.is_none_or(|only| only == c))
            .find(|&c| pools[c].len() >= r.size)
            .ok_or_else(|| Error::InvalidParam(format!("cannot place {} disjoint sets of size {}", r.count, r.size)))?;
        let at = pools[c].len() - r.size;
        let mut set = pools[c].split_off(at);
        set.sort_unstable();
        out.push(set);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
    pub n_recovered: usize,
    pub n_planted: usize,
}

/// Exact set-of-sets match between recovered hyperedges (size ≥ 3 only)
/// and the planted ones. `0/0` counts as 1.
pub fn evaluate_reconstruction(recovered: &[Vec<NodeId>], planted: &[Vec<NodeId>]) -> AccuracyReport {
    let norm = |s: &Vec<NodeId>| {
        let mut v = s.clone();
        v.sort_unstable();
        v.dedup();
        v
    };
    let rec: BTreeSet<Vec<NodeId>> = recovered.iter().filter(|s| s.len() >= 3).map(norm).collect();
    let pla: BTreeSet<Vec<NodeId>> = planted.iter().map(norm).collect();
    let inter = rec.intersection(&pla).count();
    let union = rec.union(&pla).count();
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    AccuracyReport {
        precision: ratio(inter, rec.len()),
        recall: ratio(inter, pla.len()),
        jaccard: ratio(inter, union),
        n_recovered: rec.len(),
        n_planted: pla.len(),
    }
}

/// Hyperedges of size ≥ 3 left live after running hyperedge construction
/// with snapshot size `b` over the whole stream.
pub fn reconstruct(g: &TemporalGraph, b: usize) -> Result<Vec<Vec<NodeId>>> {
    let mut builder = HyperedgeBuilder::new(g.num_nodes(), b);
    for e in g.events() {
        builder.ingest(e.src, e.dst, e.time)?;
    }
    let end = g.events().last().map_or(0.0, |e| e.time);
    builder.finish(end);
    Ok(builder
        .registry
        .hyperedges()
        .filter(|e| e.len() >= 3)
        .map(|e| e.members.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub duration: usize,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSummary {
    pub duration: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_jaccard: f64,
    pub std_jaccard: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

impl SweepResult {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("duration,seed,precision,recall,jaccard\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.duration, r.seed, r.precision, r.recall, r.jaccard);
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("duration,mean_precision,mean_recall,mean_jaccard,std_jaccard\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.duration, s.mean_precision, s.mean_recall, s.mean_jaccard, s.std_jaccard
            );
        }
        out
    }

    /// Spearman correlation between duration and mean jaccard over the
    /// durations strictly longer than `burst_width`.
    pub fn trend_after(&self, burst_width: usize) -> Option<f64> {
        let pts: Vec<&SweepSummary> = self.summary.iter().filter(|s| s.duration > burst_width).collect();
        if pts.len() < 2 {
            return None;
        }
        let x: Vec<f64> = pts.iter().map(|s| s.duration as f64).collect();
        let y: Vec<f64> = pts.iter().map(|s| s.mean_jaccard).collect();
        Some(spearman(&x, &y))
    }
}

/// Burst width in edges of the largest planted hyperedge.
pub fn burst_width(p: &HtsbmParams) -> usize {
    let size = p
        .planted
        .iter()
        .map(|s| s.members.len())
        .chain(p.random_planted.map(|r| r.size))
        .max()
        .unwrap_or(0);
    size * size.saturating_sub(1) / 2
}

/// Runs hyperedge construction with each snapshot size in `durations`
/// over `seeds` sampled streams (seeds `base_seed..base_seed+seeds`).
/// Cells run in parallel; output order is `(duration, seed)`.
pub fn duration_sweep(p: &HtsbmParams, durations: &[usize], seeds: usize, base_seed: u64) -> Result<SweepResult> {
    if durations.is_empty() || durations.windows(2).any(|w| w[0] >= w[1]) || durations[0] == 0 {
        return Err(Error::InvalidParam("durations must be positive and strictly ascending".into()));
    }
    if seeds == 0 {
        return Err(Error::InvalidParam("need at least one seed".into()));
    }
    let per_seed: Vec<Vec<SweepRow>> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let seed = base_seed + s;
            let sample = sample_htsbm(p, seed)?;
            durations
                .iter()
                .map(|&b| {
                    let rec = reconstruct(&sample.graph, b)?;
                    let acc = evaluate_reconstruction(&rec, &sample.planted);
                    Ok(SweepRow {
                        duration: b,
                        seed,
                        precision: acc.precision,
                        recall: acc.recall,
                        jaccard: acc.jaccard,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<SweepRow> = per_seed.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.duration, r.seed));
    let summary = durations
        .iter()
        .map(|&d| {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.duration == d).collect();
            let m = cell.len() as f64;
            let mean = |f: fn(&SweepRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / m;
            let mj = mean(|r| r.jaccard);
            let var = if cell.len() > 1 {
                cell.iter().map(|r| (r.jaccard - mj).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            SweepSummary {
                duration: d,
                mean_precision: mean(|r| r.precision),
                mean_recall: mean(|r| r.recall),
                mean_jaccard: mj,
                std_jaccard: var.sqrt(),
            }
        })
        .collect();
    Ok(SweepResult { rows, summary })
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    if sx == 0.0 || sy == 0.0 {
        0.0
    } else {
        cov / (sx * sy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_triangle() -> HtsbmParams {
        let mut p = HtsbmParams::blocks(6, 2, 0.5, 0.1);
        p.noise_scale = 0.0;
        p.planted.push(PlantedSpec {
            members: vec![0, 1, 2],
            activation: Some(Activation::Fixed { at: 10.0 }),
        });
        p
    }

    #[test]
    fn noiseless_triangle_is_three_events() {
        let p = quiet_triangle();
        let s = sample_htsbm(&p, 7).unwrap();
        assert_eq!(s.graph.len(), 3);
        assert!(s.graph.events().iter().all(|e| (10.0..10.0 + p.jitter).contains(&e.time)));
        assert_eq!(s.planted, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn zero_intensity_gives_no_events() {
        let mut p = HtsbmParams::blocks(10, 2, 0.0, 0.0);
        p.noise_scale = 1.0;
        let s = sample_htsbm(&p, 1).unwrap();
        assert!(s.graph.is_empty());
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn generator_is_deterministic() {
        let p = HtsbmParams::duration_experiment();
        let a = sample_htsbm(&p, 3).unwrap();
        let b = sample_htsbm(&p, 3).unwrap();
        assert_eq!(a.graph.events(), b.graph.events());
        assert_eq!(a.planted, b.planted);
        let c = sample_htsbm(&p, 4).unwrap();
        assert_ne!(a.graph.events(), c.graph.events());
    }

    #[test]
    fn timestamps_within_horizon() {
        let p = HtsbmParams::duration_experiment();
        let s = sample_htsbm(&p, 11).unwrap();
        assert!(s.graph.events().iter().all(|e| (0.0..=p.horizon).contains(&e.time)));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = HtsbmParams::blocks(6, 2, 0.5, 0.1);
        p.lambda0[0][1] = 0.2;
        assert!(p.validate().is_err());
        let mut p = HtsbmParams::blocks(6, 2, 0.5, 0.1);
        p.planted.push(PlantedSpec { members: vec![0, 1, 5], activation: None });
        assert!(p.validate().is_err());
        let mut p = HtsbmParams::blocks(6, 2, 0.5, 0.1);
        p.lambda = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn pair_unranking_covers_all_pairs() {
        let n = 7;
        let pairs: Vec<(usize, usize)> = (0..n * (n - 1) / 2).map(|r| unrank_pair(r, n)).collect();
        let mut expect = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                expect.push((i, j));
            }
        }
        assert_eq!(pairs, expect);
    }

    #[test]
    fn reconstruction_metric_examples() {
        let r = evaluate_reconstruction(&[vec![1, 2, 3]], &[vec![1, 2, 3]]);
        assert_eq!((r.precision, r.recall, r.jaccard), (1.0, 1.0, 1.0));

        let r = evaluate_reconstruction(&[], &[vec![1, 2, 3]]);
        assert_eq!((r.precision, r.recall, r.jaccard), (1.0, 0.0, 0.0));

        let r = evaluate_reconstruction(&[vec![1, 2, 3], vec![1, 3, 8]], &[vec![1, 2, 3], vec![4, 5, 6]]);
        assert_eq!((r.precision, r.recall), (0.5, 0.5));
        assert!((r.jaccard - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sweep_rejects_unsorted_durations() {
        let p = HtsbmParams::duration_experiment();
        assert!(duration_sweep(&p, &[30, 3], 2, 0).is_err());
    }

    #[test]
    fn background_count_within_poisson_band() {
        // 60 nodes in 3 blocks of 20: 3·C(20,2) within pairs, 3·20·20 between.
        let (within, between) = (0.6, 0.1);
        let mut p = HtsbmParams::blocks(60, 3, within, between);
        p.random_planted = Some(RandomPlanted { count: 10, size: 3, community: None });
        p.noise_scale = 0.5;
        let per_seed =
            p.noise_scale * (570.0 * within + 1200.0 * between) * (1.0 - (-p.lambda * p.horizon).exp());
        let seeds = 50;
        let mut total = 0usize;
        for seed in 0..seeds {
            let s = sample_htsbm(&p, seed).unwrap();
            assert_eq!(s.graph.len(), s.background_events + 30);
            total += s.background_events;
        }
        let mean = per_seed * seeds as f64;
        assert!(
            (total as f64 - mean).abs() <= 3.0 * mean.sqrt(),
            "observed {total}, expected {mean:.1}"
        );
    }

    #[test]
    fn background_respects_block_intensities() {
        let mut p = HtsbmParams::blocks(40, 2, 1.0, 0.0);
        p.noise_scale = 1.0;
        let s = sample_htsbm(&p, 5).unwrap();
        assert!(!s.graph.is_empty());
        assert!(s.graph.events().iter().all(|e| p.community(e.src) == p.community(e.dst)));
    }

    #[test]
    fn noiseless_sweep_is_flat_at_one() {
        let mut p = HtsbmParams::blocks(30, 3, 0.5, 0.1);
        p.noise_scale = 0.0;
        p.random_planted = Some(RandomPlanted { count: 6, size: 3, community: None });
        // with only 18 planted events, any b ≥ 18 sees the whole stream
        let r = duration_sweep(&p, &[18, 30, 60, 90], 20, 0).unwrap();
        assert_eq!(r.rows.len(), 80);
        assert!(r.summary.iter().all(|s| s.mean_jaccard == 1.0));
    }

    #[test]
    fn snapshot_narrower_than_burst_recovers_nothing() {
        let p = HtsbmParams::duration_experiment();
        let s = sample_htsbm(&p, 2).unwrap();
        let acc = evaluate_reconstruction(&reconstruct(&s.graph, 2).unwrap(), &s.planted);
        assert_eq!(acc.recall, 0.0);
    }

    #[test]
    fn pinned_planted_community() {
        let p = HtsbmParams::duration_experiment();
        let s = sample_htsbm(&p, 9).unwrap();
        assert_eq!(s.planted.len(), 10);
        assert!(s.planted.iter().flatten().all(|&n| p.community(n) == 2));
        let mut seen: Vec<NodeId> = s.planted.iter().flatten().copied().collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 30);
    }
}
