//! Training loop, negative sampling and MRR evaluation.
//!
//! A pass over a stream keeps one [`HtgnState`]. Events are processed in
//! batches: the previous batch is committed into memory on the same tape
//! that scores the current batch, so the loss reaches the GRU and merge
//! parameters through that replay; memory is then detached.

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Event, GraphKind, NodeId, SplitSpec, TemporalGraph};
use crate::hyperedge::HyperedgeRegistry;
use crate::model::{EmbedCache, EmbedView, HtgnState, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub train_negatives: usize,
    pub eval_negatives: usize,
    /// Fraction of evaluation negatives drawn uniformly; the rest are
    /// historical.
    pub neg_mix: f64,
    /// Stop after this many epochs without a better validation MRR.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 200,
            lr: 1e-4,
            epochs: 50,
            seed: 0,
            train_negatives: 1,
            eval_negatives: 100,
            neg_mix: 0.5,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.train_negatives == 0 || self.eval_negatives == 0 || self.patience == 0 {
            return Err(Error::InvalidParam("batch size, negative counts and patience must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.neg_mix) {
            return Err(Error::InvalidParam(format!("neg_mix {} outside [0, 1]", self.neg_mix)));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidParam(format!("learning rate {} must be finite and ≥ 0", self.lr)));
        }
        Ok(())
    }
}

/// Hyperedge construction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuilderConfig {
    /// Snapshot size in edges.
    pub b: usize,
    /// Bipartite staleness horizon; defaults to the median training gap
    /// times `capacity`.
    pub t_prime: Option<f64>,
    pub capacity: usize,
    /// Disable merging so every hyperedge stays a pair.
    pub pairwise_only: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            b: 200,
            t_prime: None,
            capacity: 15,
            pairwise_only: false,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.capacity == 0 {
            return Err(Error::InvalidParam("snapshot size and capacity must be positive".into()));
        }
        if let Some(t) = self.t_prime {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidParam(format!("t_prime {t} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }

    /// `t_prime`, or the median inter-event gap of `events` × capacity.
    pub fn resolve_t_prime(&self, events: &[Event]) -> f64 {
        if let Some(t) = self.t_prime {
            return t;
        }
        let mut gaps: Vec<f64> = events.windows(2).map(|w| w[1].time - w[0].time).collect();
        gaps.sort_by(f64::total_cmp);
        let median = if gaps.is_empty() { 0.0 } else { gaps[gaps.len() / 2] };
        let gap = if median > 0.0 {
            median
        } else {
            // tied timestamps: fall back to the mean gap, then to 1
            let mean = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        };
        gap * self.capacity as f64
    }
}

/// Negatives for one query. `nodes[..random]` were drawn uniformly, the
/// rest from the source's history.
#[derive(Debug, Clone, PartialEq)]
pub struct Negatives {
    pub nodes: Vec<NodeId>,
    pub random: usize,
}

/// Valid destinations of a graph: side B in bipartite mode, every node
/// otherwise.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    pool: Vec<NodeId>,
    bipartite: bool,
}

impl NegativeSampler {
    pub fn new(g: &TemporalGraph) -> Self {
        let bipartite = g.kind() == GraphKind::Bipartite;
        let pool = if bipartite { g.side_b_nodes() } else { (0..g.num_nodes()).collect() };
        NegativeSampler { pool, bipartite }
    }

    fn valid(&self, u: NodeId, v: NodeId, w: NodeId) -> bool {
        w != v && w != u
    }

    fn random(&self, u: NodeId, v: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
        loop {
            let w = self.pool[rng.gen_range(0..self.pool.len())];
            if self.valid(u, v, w) {
                return w;
            }
        }
    }

    /// `⌈k·mix⌉` uniform negatives, the rest uniform over nodes `u`
    /// interacted with before `t`; never `v` or `u` itself. Historical
    /// draws fall back to uniform when `u` has no usable history.
    #[allow(clippy::too_many_arguments)]
    pub fn sample(
        &self,
        g: &TemporalGraph,
        u: NodeId,
        v: NodeId,
        t: f64,
        k: usize,
        mix: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Negatives> {
        if !self.pool.iter().any(|&w| self.valid(u, v, w)) {
            return Err(Error::NoCandidates(u));
        }
        let n_random = ((k as f64 * mix).ceil() as usize).min(k);
        let mut nodes: Vec<NodeId> = (0..n_random).map(|_| self.random(u, v, rng)).collect();
        let history: Vec<NodeId> = if n_random < k {
            g.neighbors_before(u, t, usize::MAX)
                .into_iter()
                .map(|(w, _)| w)
                .filter(|&w| self.valid(u, v, w) && (!self.bipartite || g.is_side_b(w)))
                .collect()
        } else {
            Vec::new()
        };
        if history.is_empty() {
            nodes.extend((n_random..k).map(|_| self.random(u, v, rng)));
            return Ok(Negatives { nodes, random: k });
        }
        nodes.extend((n_random..k).map(|_| *history.choose(rng).expect("non-empty")));
        Ok(Negatives { nodes, random: n_random })
    }
}

/// Rank of the positive among `negatives`: one plus the number of
/// negatives scoring at least as high.
pub fn pessimistic_rank(positive: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= positive).count()
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Option<f64> {
    if ranks.is_empty() {
        return None;
    }
    Some(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mrr: f64,
    /// Ranked against the uniform negatives only.
    pub mrr_random: f64,
    /// Ranked against the historical negatives only, over the queries
    /// that had any.
    pub mrr_historical: Option<f64>,
    pub n_queries: usize,
    pub n_historical_queries: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub batches: usize,
    pub events: usize,
    /// Mean batch loss; absent for an empty split.
    pub loss: Option<f64>,
    pub events_per_sec: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub peak_slots: usize,
    pub num_nodes: usize,
    pub ratio: f64,
}

/// Peak memory slots relative to one slot per node.
pub fn memory_footprint_report(reg: &HyperedgeRegistry, g: &TemporalGraph) -> Footprint {
    let peak_slots = reg.peak_slots();
    let num_nodes = g.num_nodes();
    Footprint {
        peak_slots,
        num_nodes,
        ratio: peak_slots as f64 / num_nodes.max(1) as f64,
    }
}

/// One row of the metrics CSV. `seconds` is left empty so that reruns
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: String,
    pub loss: Option<f64>,
    pub mrr: Option<f64>,
    pub peak_slots: usize,
    pub ratio: f64,
    pub seconds: Option<f64>,
}

pub fn write_metrics(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Index ranges of a chronological split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    pub fn new(n: usize, spec: &SplitSpec) -> Result<Self> {
        spec.validate()?;
        let (a, b) = spec.boundaries(n);
        Ok(Splits {
            train: 0..a,
            val: a..b,
            test: b..n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_mrr: Option<f64>,
    pub stopped_early: bool,
}

fn batch_ranges(range: Range<usize>, b: usize) -> impl Iterator<Item = Range<usize>> {
    let end = range.end;
    range.clone().step_by(b).map(move |s| s..(s + b).min(end))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Model, optimizer and configuration over one event stream.
pub struct Trainer<'g> {
    pub graph: &'g TemporalGraph,
    pub mp: ModelParams,
    pub adam: Adam,
    pub cfg: TrainConfig,
    pub builder: BuilderConfig,
    t_prime: f64,
    sampler: NegativeSampler,
}

impl<'g> Trainer<'g> {
    /// `train` is used only to resolve the default bipartite horizon.
    pub fn new(
        graph: &'g TemporalGraph,
        mp: ModelParams,
        cfg: TrainConfig,
        builder: BuilderConfig,
        train: Range<usize>,
    ) -> Result<Self> {
        cfg.validate()?;
        builder.validate()?;
        if mp.edge_dim != graph.edge_dim() {
            return Err(Error::InvalidParam(format!(
                "model expects edge features of width {}, graph has {}",
                mp.edge_dim,
                graph.edge_dim()
            )));
        }
        let t_prime = builder.resolve_t_prime(&graph.events()[train]);
        Ok(Trainer {
            graph,
            adam: Adam::new(cfg.lr),
            mp,
            cfg,
            builder,
            t_prime,
            sampler: NegativeSampler::new(graph),
        })
    }

    pub fn t_prime(&self) -> f64 {
        self.t_prime
    }

    /// Empty memory and hyperedges.
    pub fn new_state(&self) -> Result<HtgnState> {
        let g = self.graph;
        let dm = self.mp.cfg.mem_dim;
        match g.kind() {
            GraphKind::Homogeneous => Ok(HtgnState::homogeneous(
                g.num_nodes(),
                self.builder.b,
                self.builder.pairwise_only,
                dm,
                self.cfg.seed,
            )),
            GraphKind::Bipartite => HtgnState::bipartite(
                g.num_nodes(),
                &g.side_b_nodes(),
                self.builder.capacity,
                self.t_prime,
                dm,
                self.cfg.seed,
            ),
        }
    }

    fn commit(&self, state: &mut HtgnState, tape: &mut Tape, range: Range<usize>) -> Result<()> {
        let events = &self.graph.events()[range];
        for ev in events {
            state.commit(tape, &self.mp, ev)?;
        }
        if let Some(last) = events.last() {
            state.end_batch(last.time)?;
        }
        Ok(())
    }

    /// Commits `range` into `state` without gradients.
    pub fn advance(&self, state: &mut HtgnState, range: Range<usize>) -> Result<()> {
        let mut tape = Tape::no_grad();
        for batch in batch_ranges(range, self.cfg.batch_size) {
            self.commit(state, &mut tape, batch)?;
            state.persist(&tape);
            tape.clear();
        }
        Ok(())
    }

    /// Logit of the link `u → w` given `u`'s embedding.
    fn score(&self, view: &EmbedView<'_>, tape: &mut Tape, hu: Var, w: NodeId, cache: &mut EmbedCache) -> Result<Var> {
        match view.reg.owned_hyperedge(w) {
            Some(id) => {
                let slot = view.reg.get(id).expect("fixed hyperedge").slot;
                let m = view.bank.read(tape, slot)?;
                self.mp.bipartite_logit(tape, hu, m)
            }
            None => {
                let hw = view.embed(tape, w, cache)?;
                self.mp.link_logit(tape, hu, hw)
            }
        }
    }

    /// One pass over `range` starting from `state`, which ends rolled
    /// forward through the whole range. `seed` fixes the negatives.
    pub fn train_epoch(&mut self, state: &mut HtgnState, range: Range<usize>, seed: u64) -> Result<EpochStats> {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        tape.set_checked(true);
        let mut pending: Option<Range<usize>> = None;
        let mut losses = Vec::new();
        let k = self.cfg.train_negatives;
        let graph = self.graph;
        for (bi, batch) in batch_ranges(range.clone(), self.cfg.batch_size).enumerate() {
            let locate = |e: Error, idx: usize| {
                let ev = &graph.events()[idx];
                match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!(
                        "batch {bi}, event {idx} ({} → {} at {}): {msg}",
                        ev.src, ev.dst, ev.time
                    )),
                    e => e,
                }
            };
            if let Some(p) = pending.take() {
                let first = p.start;
                self.commit(state, &mut tape, p).map_err(|e| locate(e, first))?;
            }
            let view = state.view(&self.mp, self.graph);
            let mut terms = Vec::with_capacity(batch.len());
            for idx in batch.clone() {
                let ev = &self.graph.events()[idx];
                let term = (|| -> Result<Var> {
                    let mut cache = EmbedCache::new(ev.time);
                    let hu = view.embed(&mut tape, ev.src, &mut cache)?;
                    let pos = self.score(&view, &mut tape, hu, ev.dst, &mut cache)?;
                    let neg_pos = tape.scale(pos, -1.0)?;
                    let mut parts = vec![tape.softplus(neg_pos)?];
                    let negs = self.sampler.sample(self.graph, ev.src, ev.dst, ev.time, k, 1.0, &mut rng)?;
                    for &w in &negs.nodes {
                        let s = self.score(&view, &mut tape, hu, w, &mut cache)?;
                        let l = tape.softplus(s)?;
                        parts.push(tape.scale(l, 1.0 / k as f64)?);
                    }
                    tape.add_many(&parts)
                })()
                .map_err(|e| locate(e, idx))?;
                terms.push(term);
            }
            let total = tape.add_many(&terms)?;
            let loss = tape.scale(total, 1.0 / terms.len() as f64)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(locate(Error::NonFinite(format!("loss {value}")), batch.start));
            }
            losses.push(value);
            state.persist(&tape);
            tape.backward(loss, Some(&mut self.mp.store))?;
            self.adam.lr = self.cfg.lr;
            self.adam.step(&mut self.mp.store);
            pending = Some(batch);
        }
        if let Some(p) = pending {
            self.advance(state, p)?;
        }
        let secs = start.elapsed().as_secs_f64();
        Ok(EpochStats {
            batches: losses.len(),
            events: range.len(),
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            events_per_sec: if secs > 0.0 { range.len() as f64 / secs } else { 0.0 },
        })
    }

    /// Positive and negative logits of one query against a frozen state.
    fn query(&self, state: &HtgnState, idx: usize) -> Result<(f64, Vec<f64>, usize)> {
        let ev = &self.graph.events()[idx];
        let mut rng = stream_rng(self.cfg.seed, idx as u64);
        let negs = self.sampler.sample(
            self.graph,
            ev.src,
            ev.dst,
            ev.time,
            self.cfg.eval_negatives,
            self.cfg.neg_mix,
            &mut rng,
        )?;
        let mut tape = Tape::no_grad();
        let view = state.view(&self.mp, self.graph);
        let mut cache = EmbedCache::new(ev.time);
        let hu = view.embed(&mut tape, ev.src, &mut cache)?;
        let pos = self.score(&view, &mut tape, hu, ev.dst, &mut cache)?;
        let pos = tape.scalar(pos);
        let mut scores = Vec::with_capacity(negs.nodes.len());
        for &w in &negs.nodes {
            let s = self.score(&view, &mut tape, hu, w, &mut cache)?;
            scores.push(tape.scalar(s));
        }
        Ok((pos, scores, negs.random))
    }

    /// Scores every event of `range` against `eval_negatives` negatives,
    /// committing each batch after it is scored.
    pub fn evaluate_mrr(&self, state: &mut HtgnState, range: Range<usize>) -> Result<EvalResult> {
        if range.is_empty() {
            return Err(Error::EmptySplit("evaluation"));
        }
        let mut ranks = Vec::with_capacity(range.len());
        let mut random_ranks = Vec::with_capacity(range.len());
        let mut hist_ranks = Vec::new();
        let mut tape = Tape::no_grad();
        for batch in batch_ranges(range, self.cfg.batch_size) {
            let frozen = &*state;
            let scored: Vec<(f64, Vec<f64>, usize)> =
                batch.clone().into_par_iter().map(|idx| self.query(frozen, idx)).collect::<Result<_>>()?;
            for (pos, negs, random) in scored {
                ranks.push(pessimistic_rank(pos, &negs));
                random_ranks.push(pessimistic_rank(pos, &negs[..random]));
                if random < negs.len() {
                    hist_ranks.push(pessimistic_rank(pos, &negs[random..]));
                }
            }
            self.commit(state, &mut tape, batch)?;
            state.persist(&tape);
            tape.clear();
        }
        Ok(EvalResult {
            mrr: mrr(&ranks).expect("non-empty"),
            mrr_random: mrr(&random_ranks).expect("non-empty"),
            mrr_historical: mrr(&hist_ranks),
            n_queries: ranks.len(),
            n_historical_queries: hist_ranks.len(),
            negatives: self.cfg.eval_negatives,
        })
    }

    /// MRR of a scorer that knows the answer, over the same negatives the
    /// model would see. A sanity check of the ranking plumbing.
    pub fn oracle_mrr(&self, range: Range<usize>) -> Result<EvalResult> {
        if range.is_empty() {
            return Err(Error::EmptySplit("evaluation"));
        }
        let mut ranks = Vec::with_capacity(range.len());
        let mut hist = 0;
        for idx in range {
            let ev = &self.graph.events()[idx];
            let mut rng = stream_rng(self.cfg.seed, idx as u64);
            let negs = self.sampler.sample(
                self.graph,
                ev.src,
                ev.dst,
                ev.time,
                self.cfg.eval_negatives,
                self.cfg.neg_mix,
                &mut rng,
            )?;
            let scores: Vec<f64> = negs.nodes.iter().map(|&w| if w == ev.dst { 1.0 } else { 0.0 }).collect();
            hist += usize::from(negs.random < negs.nodes.len());
            ranks.push(pessimistic_rank(1.0, &scores));
        }
        let m = mrr(&ranks).expect("non-empty");
        Ok(EvalResult {
            mrr: m,
            mrr_random: m,
            mrr_historical: (hist > 0).then_some(m),
            n_queries: ranks.len(),
            n_historical_queries: hist,
            negatives: self.cfg.eval_negatives,
        })
    }

    /// Fresh pass: roll forward through everything before `target`, then
    /// evaluate it.
    pub fn evaluate_split(&self, target: Range<usize>) -> Result<EvalResult> {
        let mut state = self.new_state()?;
        self.advance(&mut state, 0..target.start)?;
        self.evaluate_mrr(&mut state, target)
    }

    /// Per-epoch seed for training negatives.
    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// Trains with validation after every epoch and early stopping. The
    /// parameters with the best validation MRR are restored at the end.
    pub fn fit(&mut self, splits: &Splits, mut on_row: impl FnMut(&MetricRow)) -> Result<FitReport> {
        let mut best: Option<(usize, f64, ParamStore)> = None;
        let mut stale = 0;
        let mut epochs_run = 0;
        let mut stopped_early = false;
        for epoch in 1..=self.cfg.epochs {
            epochs_run = epoch;
            let mut state = self.new_state()?;
            let stats = self.train_epoch(&mut state, splits.train.clone(), self.epoch_seed(epoch))?;
            let fp = memory_footprint_report(state.registry(), self.graph);
            on_row(&MetricRow {
                epoch,
                split: "train".into(),
                loss: stats.loss,
                mrr: None,
                peak_slots: fp.peak_slots,
                ratio: fp.ratio,
                seconds: None,
            });
            if splits.val.is_empty() {
                continue;
            }
            let val = self.evaluate_mrr(&mut state, splits.val.clone())?;
            let fp = memory_footprint_report(state.registry(), self.graph);
            on_row(&MetricRow {
                epoch,
                split: "val".into(),
                loss: None,
                mrr: Some(val.mrr),
                peak_slots: fp.peak_slots,
                ratio: fp.ratio,
                seconds: None,
            });
            if best.as_ref().is_none_or(|b| val.mrr > b.1) {
                best = Some((epoch, val.mrr, self.mp.store.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= self.cfg.patience {
                    stopped_early = epoch < self.cfg.epochs;
                    break;
                }
            }
        }
        let (best_epoch, best_val_mrr) = match best {
            Some((e, m, store)) => {
                self.mp.store = store;
                (Some(e), Some(m))
            }
            None => (None, None),
        };
        Ok(FitReport {
            epochs_run,
            best_epoch,
            best_val_mrr,
            stopped_early,
        })
    }
}
