//! The hyperedge-memory temporal graph network.
//!
//! Every live hyperedge owns a memory slot. Merges fold the absorbed
//! slots through a small MLP with exponential time decay; each interaction
//! updates the memories of one hyperedge on each side through a GRU.
//! Node embeddings sum the memories of a node's hyperedges (with time
//! encodings of their staleness) and then aggregate temporal neighbors for
//! the remaining layers. Links are scored by an MLP on the elementwise
//! product of the two embeddings.

mod memory;

pub use memory::MemoryBank;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{Event, NodeId, TemporalGraph};
use crate::hyperedge::{HyperedgeBuilder, HyperedgeId, HyperedgeRegistry, MergeEvent, SlotId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Node embedding width.
    pub emb_dim: usize,
    /// Time-encoding width.
    pub time_dim: usize,
    /// Memory width.
    pub mem_dim: usize,
    /// Hidden width of the merge and link MLPs.
    pub hidden: usize,
    pub layers: usize,
    pub neighbor_cap: usize,
    /// Decay base.
    pub alpha: f64,
    /// Decay rate.
    pub beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_dim: 100,
            time_dim: 100,
            mem_dim: 175,
            hidden: 100,
            layers: 2,
            neighbor_cap: 20,
            alpha: 2.0,
            beta: 1e-4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 || self.time_dim == 0 || self.mem_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidParam("model widths must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::InvalidParam("need at least one layer".into()));
        }
        if !(self.alpha > 1.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "decay needs alpha > 1 and beta ≥ 0, got {} and {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Width of an interaction message for edge features of width `d_e`.
    pub fn message_dim(&self, d_e: usize) -> usize {
        2 * self.mem_dim + self.time_dim + d_e + 1
    }
}

#[derive(Debug, Clone)]
struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct Gru {
    wz: ParamId,
    uz: ParamId,
    bz: ParamId,
    wr: ParamId,
    ur: ParamId,
    br: ParamId,
    wn: ParamId,
    un: ParamId,
    bn: ParamId,
}

#[derive(Debug, Clone)]
struct Layer {
    w1: ParamId,
    /// Absent for the first layer.
    w2: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub edge_dim: usize,
    pub store: ParamStore,
    time_w: ParamId,
    time_b: ParamId,
    merge: Mlp,
    gru: Gru,
    layers: Vec<Layer>,
    link: Mlp,
    proj: ParamId,
}

const LINK_OUTPUT_GAIN: f64 = 0.01;

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(rows, cols, data).expect("finite init")
}

impl ModelParams {
    pub fn new(cfg: ModelConfig, edge_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (e, dt, dm, hd) = (cfg.emb_dim, cfg.time_dim, cfg.mem_dim, cfg.hidden);
        let mut w = |store: &mut ParamStore, name: &str, r: usize, c: usize| store.add(name, glorot(&mut rng, r, c));
        let zeros = |store: &mut ParamStore, name: &str, r: usize| store.add(name, Tensor::zeros(r, 1));

        // frequencies spread geometrically over nine decades
        let freqs: Vec<f64> = (0..dt)
            .map(|i| if dt == 1 { 1.0 } else { 10f64.powf(-9.0 * i as f64 / (dt - 1) as f64) })
            .collect();
        let time_w = store.add("time.w", Tensor::column(freqs)?);
        let time_b = zeros(&mut store, "time.b", dt);

        let merge = Mlp {
            w1: w(&mut store, "merge.w1", hd, dm),
            b1: zeros(&mut store, "merge.b1", hd),
            w2: w(&mut store, "merge.w2", dm, hd),
            b2: zeros(&mut store, "merge.b2", dm),
        };
        let f = cfg.message_dim(edge_dim);
        let gru = Gru {
            wz: w(&mut store, "gru.wz", dm, f),
            uz: w(&mut store, "gru.uz", dm, dm),
            bz: zeros(&mut store, "gru.bz", dm),
            wr: w(&mut store, "gru.wr", dm, f),
            ur: w(&mut store, "gru.ur", dm, dm),
            br: zeros(&mut store, "gru.br", dm),
            wn: w(&mut store, "gru.wn", dm, f),
            un: w(&mut store, "gru.un", dm, dm),
            bn: zeros(&mut store, "gru.bn", dm),
        };
        let mut layers = vec![Layer {
            w1: w(&mut store, "layer1.w1", e, dm + dt),
            w2: None,
        }];
        for l in 2..=cfg.layers {
            layers.push(Layer {
                w1: w(&mut store, &format!("layer{l}.w1"), e, e + dt),
                w2: Some(w(&mut store, &format!("layer{l}.w2"), e, 2 * e)),
            });
        }
        let link = Mlp {
            w1: w(&mut store, "link.w1", hd, e),
            b1: zeros(&mut store, "link.b1", hd),
            // summed embeddings are large; a small output layer keeps the
            // initial logits near zero
            w2: {
                let id = w(&mut store, "link.w2", 1, hd);
                store.tensor_mut(id).values_mut().iter_mut().for_each(|x| *x *= LINK_OUTPUT_GAIN);
                id
            },
            b2: zeros(&mut store, "link.b2", 1),
        };
        let proj = w(&mut store, "bipartite.proj", e, dm);
        Ok(ModelParams {
            cfg,
            edge_dim,
            store,
            time_w,
            time_b,
            merge,
            gru,
            layers,
            link,
            proj,
        })
    }

    fn p(&self, tape: &mut Tape, id: ParamId) -> Var {
        tape.param(&self.store, id)
    }

    /// `α^(−β·gap)`.
    pub fn decay(&self, gap: f64) -> f64 {
        self.cfg.alpha.powf(-self.cfg.beta * gap)
    }

    fn mlp(&self, tape: &mut Tape, m: &Mlp, x: Var) -> Result<Var> {
        let (w1, b1, w2, b2) = (self.p(tape, m.w1), self.p(tape, m.b1), self.p(tape, m.w2), self.p(tape, m.b2));
        let h = tape.matmul(w1, x)?;
        let h = tape.add(h, b1)?;
        let h = tape.relu(h)?;
        let o = tape.matmul(w2, h)?;
        tape.add(o, b2)
    }

    pub fn merge_mlp(&self, tape: &mut Tape, m: Var) -> Result<Var> {
        self.mlp(tape, &self.merge, m)
    }

    /// One GRU step of memory `h` on input `f`.
    pub fn gru(&self, tape: &mut Tape, f: Var, h: Var) -> Result<Var> {
        let g = &self.gru;
        let gate = |tape: &mut Tape, w: ParamId, u: ParamId, b: ParamId| -> Result<(Var, Var, Var)> {
            let (w, u, b) = (self.p(tape, w), self.p(tape, u), self.p(tape, b));
            let wf = tape.matmul(w, f)?;
            let uh = tape.matmul(u, h)?;
            Ok((wf, uh, b))
        };
        let (wf, uh, b) = gate(tape, g.wz, g.uz, g.bz)?;
        let z = tape.add_many(&[wf, uh, b])?;
        let z = tape.sigmoid(z)?;
        let (wf, uh, b) = gate(tape, g.wr, g.ur, g.br)?;
        let r = tape.add_many(&[wf, uh, b])?;
        let r = tape.sigmoid(r)?;
        let (wf, uh, b) = gate(tape, g.wn, g.un, g.bn)?;
        let ruh = tape.mul(r, uh)?;
        let n = tape.add_many(&[wf, ruh, b])?;
        let n = tape.tanh(n)?;
        // h' = (1 − z)⊙n + z⊙h
        let keep = tape.scale(z, -1.0)?;
        let keep = tape.add_scalar(keep, 1.0)?;
        let a = tape.mul(keep, n)?;
        let b = tape.mul(z, h)?;
        tape.add(a, b)
    }

    pub fn link_logit(&self, tape: &mut Tape, hu: Var, hv: Var) -> Result<Var> {
        let e = self.cfg.emb_dim;
        for h in [hu, hv] {
            if tape.shape(h) != (e, 1) {
                return Err(Error::Shape {
                    op: "link predictor",
                    lhs: tape.shape(h),
                    rhs: (e, 1),
                });
            }
        }
        let x = tape.mul(hu, hv)?;
        self.mlp(tape, &self.link, x)
    }

    /// Projects a memory vector to the embedding width.
    pub fn project(&self, tape: &mut Tape, m: Var) -> Result<Var> {
        let p = self.p(tape, self.proj);
        tape.matmul(p, m)
    }

    pub fn bipartite_logit(&self, tape: &mut Tape, hu: Var, m_ev: Var) -> Result<Var> {
        let hv = self.project(tape, m_ev)?;
        self.link_logit(tape, hu, hv)
    }

    /// Every parameter id, in registration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    /// Parameters read by each named sub-function.
    pub fn param_groups(&self) -> Vec<(&'static str, Vec<ParamId>)> {
        let m = |x: &Mlp| vec![x.w1, x.b1, x.w2, x.b2];
        let g = &self.gru;
        let mut emb = vec![self.layers[0].w1, self.time_w, self.time_b];
        let mut deep = Vec::new();
        for l in &self.layers[1..] {
            deep.push(l.w1);
            deep.extend(l.w2);
        }
        emb.extend(&deep);
        vec![
            ("time", vec![self.time_w, self.time_b]),
            ("merge", m(&self.merge)),
            ("gru", vec![g.wz, g.uz, g.bz, g.wr, g.ur, g.br, g.wn, g.un, g.bn]),
            ("layer1", vec![self.layers[0].w1, self.time_w, self.time_b]),
            ("deep_layers", deep),
            ("link", m(&self.link)),
            ("bipartite", vec![self.proj]),
            ("embedding", emb),
        ]
    }
}

/// `φ(dt)_i = cos(w_i·dt + b_i)`.
pub fn time_encode(tape: &mut Tape, mp: &ModelParams, dt: f64) -> Result<Var> {
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::InvalidParam(format!("time gap {dt} must be finite and ≥ 0")));
    }
    let w = mp.p(tape, mp.time_w);
    let b = mp.p(tape, mp.time_b);
    let x = tape.scale(w, dt)?;
    let x = tape.add(x, b)?;
    tape.cos(x)
}

/// Writes `Σ merge_mlp(m[E])·α^(−β(t*−t[E]))` over the absorbed
/// hyperedges into the new slot and frees the absorbed slots. Summation
/// runs in ascending slot order.
pub fn apply_merge(tape: &mut Tape, bank: &mut MemoryBank, mp: &ModelParams, me: &MergeEvent) -> Result<Var> {
    let mut absorbed = me.absorbed.clone();
    absorbed.sort_by_key(|a| a.slot);
    let mut terms = Vec::with_capacity(absorbed.len());
    for a in &absorbed {
        let m = bank.read(tape, a.slot)?;
        let out = mp.merge_mlp(tape, m)?;
        terms.push(tape.scale(out, mp.decay(me.time - a.t_last))?);
    }
    let value = if terms.is_empty() {
        // a fresh clique with nothing to absorb starts from the pair seed
        let z = tape.zeros(mp.cfg.mem_dim, 1);
        mp.merge_mlp(tape, z)?
    } else {
        tape.add_many(&terms)?
    };
    for a in &absorbed {
        bank.free(a.slot);
    }
    bank.occupy(me.assigned_slot, me.time);
    bank.write(me.assigned_slot, value, me.time)?;
    Ok(value)
}

/// Inputs of one memory update.
#[derive(Debug, Clone, Copy)]
pub struct Interaction<'a> {
    pub u: NodeId,
    pub v: NodeId,
    pub t: f64,
    pub feat: &'a [f64],
    /// Time since the previous `u`–`v` interaction, 0 if none.
    pub dt: f64,
    /// Forces both sides onto this hyperedge (the pair the event created).
    pub pinned: Option<HyperedgeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTrace {
    pub e_u: Option<HyperedgeId>,
    pub e_v: Option<HyperedgeId>,
    pub f_u: Option<Vec<f64>>,
    pub f_v: Option<Vec<f64>>,
}

fn pick(set: &std::collections::BTreeSet<HyperedgeId>, rng: &mut ChaCha8Rng) -> Option<HyperedgeId> {
    match set.len() {
        0 => None,
        1 => set.iter().next().copied(),
        n => set.iter().nth(rng.gen_range(0..n)).copied(),
    }
}

/// Updates the memories of one hyperedge of `u` and one of `v` through
/// the GRU. Both messages read pre-update memory; when both sides pick the
/// same hyperedge the `v`-side write lands last.
pub fn update_on_interaction(
    tape: &mut Tape,
    bank: &mut MemoryBank,
    mp: &ModelParams,
    reg: &mut HyperedgeRegistry,
    it: Interaction<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<InteractionTrace> {
    let (e_u, e_v) = if let Some(p) = it.pinned {
        (Some(p), Some(p))
    } else if reg.is_bipartite() {
        (pick(reg.hyperedges_of(it.u), rng), reg.owned_hyperedge(it.v))
    } else {
        let eu = pick(reg.hyperedges_of(it.u), rng);
        let ev = pick(reg.hyperedges_of(it.v), rng);
        if eu.is_none() || ev.is_none() {
            return Err(Error::Consistency(format!(
                "interaction {}–{} at {} with an uncovered endpoint",
                it.u, it.v, it.t
            )));
        }
        (eu, ev)
    };
    let slot_of = |id: Option<HyperedgeId>| -> Result<Option<(SlotId, usize)>> {
        id.map(|id| {
            reg.get(id)
                .map(|e| (e.slot, e.len()))
                .ok_or_else(|| Error::Consistency(format!("{id} is not live")))
        })
        .transpose()
    };
    let (su, sv) = (slot_of(e_u)?, slot_of(e_v)?);
    let dm = mp.cfg.mem_dim;
    let read = |tape: &mut Tape, bank: &MemoryBank, s: Option<(SlotId, usize)>| match s {
        Some((slot, _)) => bank.read(tape, slot),
        None => Ok(tape.zeros(dm, 1)),
    };
    let mu = read(tape, bank, su)?;
    let mv = read(tape, bank, sv)?;
    let phi = time_encode(tape, mp, it.dt)?;
    let feat = (!it.feat.is_empty()).then(|| tape.constant_column(it.feat.to_vec()));

    let message = |tape: &mut Tape, own: Var, other: Var, size: usize| -> Result<Var> {
        let size = tape.constant_column(vec![size as f64]);
        let mut parts = vec![own, other, phi];
        parts.extend(feat);
        parts.push(size);
        tape.concat_rows(&parts)
    };
    let mut trace = InteractionTrace {
        e_u,
        e_v,
        f_u: None,
        f_v: None,
    };
    let mut writes = Vec::new();
    if let Some((slot, size)) = su {
        let f = message(tape, mu, mv, size)?;
        trace.f_u = Some(tape.value(f).to_vec());
        writes.push((slot, mp.gru(tape, f, mu)?));
    }
    if let Some((slot, size)) = sv {
        let f = message(tape, mv, mu, size)?;
        trace.f_v = Some(tape.value(f).to_vec());
        writes.push((slot, mp.gru(tape, f, mv)?));
    }
    for (slot, value) in writes {
        bank.write(slot, value, it.t)?;
    }
    for (n, e) in [(it.u, e_u), (it.v, e_v)] {
        if let Some(id) = e {
            if reg.recency(n, id).is_some() {
                reg.touch(n, id, it.t)?;
            }
        }
    }
    Ok(trace)
}

/// Per-query memo of node embeddings by `(node, layer)`.
#[derive(Debug, Default)]
pub struct EmbedCache {
    t: f64,
    by_layer: HashMap<(NodeId, usize), Var>,
}

impl EmbedCache {
    pub fn new(t: f64) -> Self {
        EmbedCache {
            t,
            by_layer: HashMap::new(),
        }
    }
}

/// Read-only inputs of the embedding: parameters, memory, hyperedges and
/// the event history used for temporal neighbors.
#[derive(Clone, Copy)]
pub struct EmbedView<'a> {
    pub mp: &'a ModelParams,
    pub bank: &'a MemoryBank,
    pub reg: &'a HyperedgeRegistry,
    pub graph: &'a TemporalGraph,
}

impl EmbedView<'_> {
    /// Final-layer embedding of `u` at time `t`.
    pub fn embed(&self, tape: &mut Tape, u: NodeId, cache: &mut EmbedCache) -> Result<Var> {
        self.layer(tape, u, self.mp.cfg.layers, cache)
    }

    fn layer(&self, tape: &mut Tape, u: NodeId, l: usize, cache: &mut EmbedCache) -> Result<Var> {
        if let Some(&v) = cache.by_layer.get(&(u, l)) {
            return Ok(v);
        }
        let v = if l == 1 { self.first_layer(tape, u, cache.t)? } else { self.deep_layer(tape, u, l, cache)? };
        cache.by_layer.insert((u, l), v);
        Ok(v)
    }

    /// `ReLU(W₁ Σ_E (m[E] ‖ φ(t − t[u,E])))`, zero for an uncovered node.
    fn first_layer(&self, tape: &mut Tape, u: NodeId, t: f64) -> Result<Var> {
        let mp = self.mp;
        let incident: Vec<(SlotId, f64)> = match self.reg.owned_hyperedge(u) {
            Some(id) => {
                let e = self.reg.get(id).expect("fixed hyperedge");
                vec![(e.slot, self.reg.t_last(id).expect("live"))]
            }
            None => self
                .reg
                .hyperedges_of(u)
                .iter()
                .map(|&id| (self.reg.get(id).expect("live").slot, self.reg.recency(u, id).expect("member")))
                .collect(),
        };
        if incident.is_empty() {
            return Ok(tape.zeros(mp.cfg.emb_dim, 1));
        }
        let mut ms = Vec::with_capacity(incident.len());
        let mut phis = Vec::with_capacity(incident.len());
        for (slot, r) in incident {
            ms.push(self.bank.read(tape, slot)?);
            phis.push(time_encode(tape, mp, t - r)?);
        }
        let m = tape.add_many(&ms)?;
        let phi = tape.add_many(&phis)?;
        let x = tape.concat_rows(&[m, phi])?;
        let w = mp.p(tape, mp.layers[0].w1);
        let h = tape.matmul(w, x)?;
        tape.relu(h)
    }

    fn deep_layer(&self, tape: &mut Tape, u: NodeId, l: usize, cache: &mut EmbedCache) -> Result<Var> {
        let mp = self.mp;
        let layer = &mp.layers[l - 1];
        let prev = self.layer(tape, u, l - 1, cache)?;
        let nbrs = self.graph.neighbors_before(u, cache.t, mp.cfg.neighbor_cap);
        let agg = if nbrs.is_empty() {
            tape.zeros(mp.cfg.emb_dim, 1)
        } else {
            let mut hs = Vec::with_capacity(nbrs.len());
            let mut phis = Vec::with_capacity(nbrs.len());
            for (j, tj) in nbrs {
                hs.push(self.layer(tape, j, l - 1, cache)?);
                phis.push(time_encode(tape, mp, cache.t - tj)?);
            }
            let h = tape.add_many(&hs)?;
            let phi = tape.add_many(&phis)?;
            let x = tape.concat_rows(&[h, phi])?;
            let w = mp.p(tape, layer.w1);
            let a = tape.matmul(w, x)?;
            tape.relu(a)?
        };
        let x = tape.concat_rows(&[prev, agg])?;
        let w2 = mp.p(tape, layer.w2.expect("deep layer"));
        tape.matmul(w2, x)
    }
}

/// `Sigmoid(MLP_link(h_u ⊗ h_v))`.
pub fn predict_link_homogeneous(tape: &mut Tape, mp: &ModelParams, hu: Var, hv: Var) -> Result<Var> {
    let l = mp.link_logit(tape, hu, hv)?;
    tape.sigmoid(l)
}

/// `Sigmoid(MLP_link(h_u ⊗ P·m[E_v]))`.
pub fn predict_link_bipartite(tape: &mut Tape, mp: &ModelParams, hu: Var, m_ev: Var) -> Result<Var> {
    let dm = mp.cfg.mem_dim;
    if tape.shape(m_ev) != (dm, 1) {
        return Err(Error::Shape {
            op: "bipartite predictor",
            lhs: tape.shape(m_ev),
            rhs: (dm, 1),
        });
    }
    let l = mp.bipartite_logit(tape, hu, m_ev)?;
    tape.sigmoid(l)
}

/// Hyperedge structure driving the memory.
#[derive(Debug, Clone)]
pub enum Structure {
    Homogeneous {
        builder: HyperedgeBuilder,
        /// Never merge: every hyperedge stays a pair.
        pairwise_only: bool,
    },
    Bipartite {
        registry: HyperedgeRegistry,
        capacity: usize,
        t_prime: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommitTrace {
    pub new_pair: Option<HyperedgeId>,
    pub merges: Vec<MergeEvent>,
    pub interaction: InteractionTrace,
}

/// Hyperedges, memory and pair history of one pass over a stream.
#[derive(Debug, Clone)]
pub struct HtgnState {
    pub structure: Structure,
    pub bank: MemoryBank,
    pair_last: HashMap<(NodeId, NodeId), f64>,
    rng: ChaCha8Rng,
}

impl HtgnState {
    pub fn homogeneous(num_nodes: usize, batch: usize, pairwise_only: bool, mem_dim: usize, seed: u64) -> Self {
        let batch = if pairwise_only { usize::MAX } else { batch };
        HtgnState {
            structure: Structure::Homogeneous {
                builder: HyperedgeBuilder::new(num_nodes, batch),
                pairwise_only,
            },
            bank: MemoryBank::new(mem_dim),
            pair_last: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn bipartite(
        num_nodes: usize,
        side_b: &[NodeId],
        capacity: usize,
        t_prime: f64,
        mem_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let registry = HyperedgeRegistry::bipartite(num_nodes, side_b)?;
        let mut bank = MemoryBank::new(mem_dim);
        for e in registry.hyperedges() {
            bank.occupy(e.slot, 0.0);
        }
        Ok(HtgnState {
            structure: Structure::Bipartite {
                registry,
                capacity,
                t_prime,
            },
            bank,
            pair_last: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn registry(&self) -> &HyperedgeRegistry {
        match &self.structure {
            Structure::Homogeneous { builder, .. } => &builder.registry,
            Structure::Bipartite { registry, .. } => registry,
        }
    }

    pub fn view<'a>(&'a self, mp: &'a ModelParams, graph: &'a TemporalGraph) -> EmbedView<'a> {
        EmbedView {
            mp,
            bank: &self.bank,
            reg: self.registry(),
            graph,
        }
    }

    /// Applies one event: hyperedge structure first (with merges folded
    /// into memory), then the memory update of the interaction.
    pub fn commit(&mut self, tape: &mut Tape, mp: &ModelParams, ev: &Event) -> Result<CommitTrace> {
        let (u, v, t) = (ev.src, ev.dst, ev.time);
        let mut new_pair = None;
        let mut merges = Vec::new();
        match &mut self.structure {
            Structure::Homogeneous { builder, pairwise_only } => {
                let ing = builder.ingest(u, v, t)?;
                if *pairwise_only {
                    builder.snapshot.clear();
                }
                if let Some(id) = ing.new_pair {
                    let slot = builder
                        .registry
                        .get(id)
                        .map(|e| e.slot)
                        .or_else(|| {
                            ing.merges
                                .iter()
                                .flat_map(|m| &m.absorbed)
                                .find(|a| a.id == id)
                                .map(|a| a.slot)
                        })
                        .ok_or_else(|| Error::Consistency(format!("new pair {id} vanished")))?;
                    self.bank.occupy(slot, t);
                    let z = tape.zeros(mp.cfg.mem_dim, 1);
                    let seed = mp.merge_mlp(tape, z)?;
                    self.bank.write(slot, seed, t)?;
                    new_pair = Some(id);
                }
                for me in &ing.merges {
                    apply_merge(tape, &mut self.bank, mp, me)?;
                }
                merges = ing.merges;
            }
            Structure::Bipartite {
                registry,
                capacity,
                t_prime,
            } => {
                registry.ingest_link_bipartite(u, v, t, *capacity, *t_prime)?;
            }
        }
        let key = (u.min(v), u.max(v));
        let dt = self.pair_last.get(&key).map_or(0.0, |&last| t - last);
        let pinned = new_pair.filter(|&id| self.registry().get(id).is_some());
        let feat = ev.feature_or_zero(mp.edge_dim);
        let it = Interaction {
            u,
            v,
            t,
            feat: &feat,
            dt,
            pinned,
        };
        let reg = match &mut self.structure {
            Structure::Homogeneous { builder, .. } => &mut builder.registry,
            Structure::Bipartite { registry, .. } => registry,
        };
        let interaction = update_on_interaction(tape, &mut self.bank, mp, reg, it, &mut self.rng)?;
        self.pair_last.insert(key, t);
        Ok(CommitTrace {
            new_pair,
            merges,
            interaction,
        })
    }

    /// Batch-end maintenance: bipartite staleness pruning at `t_star`.
    pub fn end_batch(&mut self, t_star: f64) -> Result<()> {
        if let Structure::Bipartite { registry, t_prime, .. } = &mut self.structure {
            registry.prune_stale_memberships(t_star, *t_prime)?;
        }
        Ok(())
    }

    /// Flushes a trailing partial snapshot (homogeneous, merging mode).
    pub fn finish(&mut self, tape: &mut Tape, mp: &ModelParams, t: f64) -> Result<Vec<MergeEvent>> {
        let Structure::Homogeneous {
            builder,
            pairwise_only: false,
        } = &mut self.structure
        else {
            return Ok(Vec::new());
        };
        let merges = builder.finish(t);
        for me in &merges {
            apply_merge(tape, &mut self.bank, mp, me)?;
        }
        Ok(merges)
    }

    /// Detaches memory written on `tape` so it survives a tape clear.
    pub fn persist(&mut self, tape: &Tape) {
        self.bank.persist(tape);
    }
}
