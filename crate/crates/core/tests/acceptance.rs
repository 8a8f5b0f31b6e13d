//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Positional arguments filter criteria by name.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use htgn::autodiff::{grad_check, grad_check_params, ParamId, Tape, Tensor, Var};
use htgn::cli::cmd_train;
use htgn::config::RunConfig;
use htgn::graph::{Event, SplitSpec, TemporalGraph};
use htgn::htsbm::{burst_width, duration_sweep, HtsbmParams};
use htgn::hyperedge::{enumerate_maximal_cliques, Absorbed, HyperedgeBuilder, HyperedgeId, MergeEvent, SlotId};
use htgn::model::{
    apply_merge, predict_link_bipartite, predict_link_homogeneous, time_encode, EmbedCache, HtgnState, MemoryBank,
    ModelConfig, ModelParams,
};
use htgn::train::{memory_footprint_report, BuilderConfig, Splits, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

// ---------------------------------------------------------------- gradients

const STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const POINTS: u64 = 20;

fn small(layers: usize) -> ModelConfig {
    ModelConfig {
        emb_dim: 6,
        time_dim: 4,
        mem_dim: 5,
        hidden: 7,
        layers,
        neighbor_cap: 20,
        alpha: 2.0,
        beta: 0.05,
    }
}

/// Model with every parameter redrawn uniformly, so time frequencies,
/// biases and the link output layer are all away from their initial values.
fn random_model(layers: usize, edge_dim: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut mp = ModelParams::new(small(layers), edge_dim, rng.gen()).unwrap();
    for id in mp.param_ids() {
        for x in mp.store.tensor_mut(id).values_mut() {
            *x = rng.gen_range(-0.8..0.8);
        }
    }
    mp
}

fn group(mp: &ModelParams, names: &[&str]) -> Vec<ParamId> {
    mp.param_groups()
        .into_iter()
        .filter(|(n, _)| names.contains(n))
        .flat_map(|(_, ids)| ids)
        .collect()
}

fn column(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `Σ c ⊙ y` for a fixed random `c`.
fn contract(t: &mut Tape, y: Var, c: &[f64]) -> htgn::Result<Var> {
    let cv = t.constant_column(c.to_vec());
    let p = t.mul(y, cv)?;
    t.sum(p)
}

fn param_error<F>(mp: &ModelParams, ids: &[ParamId], f: F) -> f64
where
    F: Fn(&mut Tape, &ModelParams) -> htgn::Result<Var>,
{
    let mut store = mp.store.clone();
    let shell = mp.clone();
    grad_check_params(
        |t, s| {
            let mut m = shell.clone();
            m.store = s.clone();
            f(t, &m)
        },
        &mut store,
        ids,
        STEP,
        usize::MAX,
    )
    .unwrap()
}

/// Small stream with features: a triangle (merged at the third link with
/// b = 3) and a dangling pair, followed by random memory contents.
fn primed_state(mp: &ModelParams, rng: &mut ChaCha8Rng) -> (HtgnState, TemporalGraph) {
    let d_e = mp.edge_dim;
    let events: Vec<Event> = [(0, 1, 1.0), (1, 2, 1.5), (0, 2, 2.0), (2, 3, 2.5)]
        .iter()
        .map(|&(u, v, t)| Event {
            feat: Some(column(rng, d_e)),
            ..Event::new(u, v, t)
        })
        .collect();
    let g = TemporalGraph::homogeneous(5, events.clone(), d_e).unwrap();
    let mut st = HtgnState::homogeneous(5, 3, false, mp.cfg.mem_dim, rng.gen());
    let mut tape = Tape::no_grad();
    for e in &events {
        st.commit(&mut tape, mp, e).unwrap();
    }
    let slots: Vec<SlotId> = st.registry().hyperedges().map(|e| e.slot).collect();
    for s in slots {
        let v = tape.constant_column(column(rng, mp.cfg.mem_dim));
        st.bank.write(s, v, 2.5).unwrap();
    }
    st.persist(&tape);
    (st, g)
}

fn slot_of(st: &HtgnState, node: usize) -> SlotId {
    let id = *st.registry().hyperedges_of(node).iter().next().unwrap();
    st.registry().get(id).unwrap().slot
}

fn gradient_checks() -> Outcome {
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut note = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };
    for point in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE + point);

        // time encoding
        let mp = random_model(2, 0, &mut rng);
        let dt = rng.gen_range(0.0..5.0);
        let c = column(&mut rng, 4);
        note("time_encode", param_error(&mp, &group(&mp, &["time"]), |t, m| {
            let y = time_encode(t, m, dt)?;
            contract(t, y, &c)
        }));

        // merge of 1–3 absorbed memories
        let k = rng.gen_range(1..=3usize);
        let mems: Vec<Vec<f64>> = (0..k).map(|_| column(&mut rng, 5)).collect();
        let me = MergeEvent {
            new_id: HyperedgeId(100),
            new_members: vec![0, 1, 2],
            absorbed: (0..k)
                .map(|i| Absorbed {
                    id: HyperedgeId(i as u64),
                    slot: SlotId(i),
                    t_last: rng.gen_range(0.0..10.0),
                })
                .collect(),
            assigned_slot: SlotId(k),
            time: 10.0 + rng.gen_range(0.0..5.0),
        };
        let c = column(&mut rng, 5);
        let merged = |t: &mut Tape, m: &ModelParams, first: Option<Var>| -> htgn::Result<Var> {
            let mut bank = MemoryBank::new(5);
            for (i, v) in mems.iter().enumerate() {
                bank.occupy(SlotId(i), 0.0);
                let var = match (i, first) {
                    (0, Some(x)) => x,
                    _ => t.constant_column(v.clone()),
                };
                bank.write(SlotId(i), var, 0.0)?;
            }
            let y = apply_merge(t, &mut bank, m, &me)?;
            contract(t, y, &c)
        };
        note("merge", param_error(&mp, &group(&mp, &["merge"]), |t, m| merged(t, m, None)));
        let x = Tensor::column(mems[0].clone()).unwrap();
        note("merge", grad_check(|t, xv| merged(t, &mp, Some(xv)), &x, STEP).unwrap());

        // message construction + GRU through a full commit
        let mp = random_model(2, 2, &mut rng);
        let (base, _) = primed_state(&mp, &mut rng);
        let ev = Event {
            feat: Some(column(&mut rng, 2)),
            ..Event::new(2, 3, 3.0 + rng.gen_range(0.0..5.0))
        };
        let cs: Vec<Vec<f64>> = (0..4).map(|_| column(&mut rng, 5)).collect();
        let target = slot_of(&base, 3);
        let updated = |t: &mut Tape, m: &ModelParams, x: Option<Var>| -> htgn::Result<Var> {
            let mut st = base.clone();
            if let Some(x) = x {
                st.bank.write(target, x, 2.5)?;
            }
            st.commit(t, m, &ev)?;
            let slots: Vec<SlotId> = st.registry().hyperedges().map(|e| e.slot).collect();
            let mut terms = Vec::new();
            for (s, c) in slots.into_iter().zip(&cs) {
                let y = st.bank.read(t, s)?;
                terms.push(contract(t, y, c)?);
            }
            t.add_many(&terms)
        };
        note("message+gru", param_error(&mp, &group(&mp, &["gru", "time"]), |t, m| updated(t, m, None)));
        let x = Tensor::column(base.bank.value(&Tape::no_grad(), target).unwrap()).unwrap();
        note("message+gru", grad_check(|t, xv| updated(t, &mp, Some(xv)), &x, STEP).unwrap());

        // first embedding layer, then deeper ones
        for (layers, name, groups) in [(1, "layer1", &["layer1"][..]), (3, "deep_layers", &["deep_layers"][..])] {
            let mp = random_model(layers, 2, &mut rng);
            let (base, g) = primed_state(&mp, &mut rng);
            let u = rng.gen_range(0..4usize);
            let at = 3.0 + rng.gen_range(0.0..5.0);
            let c = column(&mut rng, 6);
            let target = slot_of(&base, u);
            let embedded = |t: &mut Tape, m: &ModelParams, x: Option<Var>| -> htgn::Result<Var> {
                let mut st = base.clone();
                if let Some(x) = x {
                    st.bank.write(target, x, 2.5)?;
                }
                let h = st.view(m, &g).embed(t, u, &mut EmbedCache::new(at))?;
                contract(t, h, &c)
            };
            note(name, param_error(&mp, &group(&mp, groups), |t, m| embedded(t, m, None)));
            let x = Tensor::column(base.bank.value(&Tape::no_grad(), target).unwrap()).unwrap();
            note(name, grad_check(|t, xv| embedded(t, &mp, Some(xv)), &x, STEP).unwrap());
        }

        // link predictors
        let mp = random_model(2, 0, &mut rng);
        let hu = Tensor::column(column(&mut rng, 6)).unwrap();
        let hv = Tensor::column(column(&mut rng, 6)).unwrap();
        let mem = Tensor::column(column(&mut rng, 5)).unwrap();
        let homog = |t: &mut Tape, m: &ModelParams, a: Var| {
            let b = t.constant(&hv);
            predict_link_homogeneous(t, m, a, b)
        };
        note("link", param_error(&mp, &group(&mp, &["link"]), |t, m| {
            let a = t.constant(&hu);
            homog(t, m, a)
        }));
        note("link", grad_check(|t, a| homog(t, &mp, a), &hu, STEP).unwrap());
        let bip = |t: &mut Tape, m: &ModelParams, me: Var| {
            let a = t.constant(&hu);
            predict_link_bipartite(t, m, a, me)
        };
        note("bipartite", param_error(&mp, &group(&mp, &["bipartite", "link"]), |t, m| {
            let me = t.constant(&mem);
            bip(t, m, me)
        }));
        note("bipartite", grad_check(|t, me| bip(t, &mp, me), &mem, STEP).unwrap());
    }
    let detail = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    if worst.iter().all(|(_, e)| *e <= GRAD_TOL) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ------------------------------------------------------------------ cliques

fn clique_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..200 {
        let n = rng.gen_range(1..=12);
        let p = [0.2, 0.5, 0.8][i % 3];
        let edges = common::random_graph(&mut rng, n, p);
        let got = enumerate_maximal_cliques(edges.iter().copied());
        let want = common::brute_force_cliques(n, &edges);
        if got != want {
            return Err(format!("graph {i} (n = {n}, p = {p}): {got:?} vs {want:?}"));
        }
    }
    Ok("200 graphs agree".into())
}

// --------------------------------------------------------------- invariants

fn invariant_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut events = 0;
    for s in 0..500 {
        let n = rng.gen_range(2..=30);
        let len = rng.gen_range(1..=2000);
        let b = [5, 20, 200][s % 3];
        let stream = common::random_stream(&mut rng, n, len);
        events += stream.len();
        common::check_stream(n, b, &stream).map_err(|e| format!("stream {s} (n = {n}, b = {b}): {e}"))?;
    }
    Ok(format!("500 streams, {events} events, no violations"))
}

// -------------------------------------------------------------------- sweep

fn duration_trend() -> Outcome {
    let p = HtsbmParams::duration_experiment();
    let res = duration_sweep(&p, &HtsbmParams::duration_grid(), 20, 0).map_err(|e| e.to_string())?;
    let bw = burst_width(&p);
    let rho = res.trend_after(bw).ok_or("fewer than two post-formation durations")?;
    let first = res
        .summary
        .iter()
        .find(|s| s.duration > bw)
        .map(|s| s.mean_jaccard)
        .ok_or("no post-formation duration")?;
    let detail = format!("spearman {rho:.3} (≤ -0.8), first post-formation jaccard {first:.3} (≥ 0.9)");
    if rho <= -0.8 && first >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ----------------------------------------------------------- expressiveness

/// Embeddings of all six nodes at t = 2 and the number of size-3
/// hyperedges, for a stream of simultaneous links.
fn six_node_embeddings(mp: &ModelParams, edges: &[(usize, usize)], pairwise_only: bool) -> (Vec<Vec<f64>>, usize) {
    let events: Vec<Event> = edges.iter().map(|&(u, v)| Event::new(u, v, 1.0)).collect();
    let g = TemporalGraph::homogeneous(6, events.clone(), mp.edge_dim).unwrap();
    let mut st = HtgnState::homogeneous(6, 6, pairwise_only, mp.cfg.mem_dim, 7);
    let mut tape = Tape::no_grad();
    for e in &events {
        st.commit(&mut tape, mp, e).unwrap();
    }
    let triangles = st.registry().hyperedges().filter(|e| e.len() == 3).count();
    let view = st.view(mp, &g);
    let mut cache = EmbedCache::new(2.0);
    let embs = (0..6)
        .map(|u| {
            let h = view.embed(&mut tape, u, &mut cache).unwrap();
            tape.value(h).to_vec()
        })
        .collect();
    (embs, triangles)
}

fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    v.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    v
}

fn expressiveness() -> Outcome {
    let mp = ModelParams::new(ModelConfig::default(), 4, 11).unwrap();
    let triangles = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
    let hexagon = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)];

    let (a, _) = six_node_embeddings(&mp, &triangles, true);
    let (b, _) = six_node_embeddings(&mp, &hexagon, true);
    let pair_gap = a
        .iter()
        .zip(&b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);

    let (a, ta) = six_node_embeddings(&mp, &triangles, false);
    let (b, tb) = six_node_embeddings(&mp, &hexagon, false);
    let dist = sorted(a)
        .iter()
        .zip(&sorted(b))
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)))
        .sum::<f64>()
        .sqrt();
    let detail = format!("pairwise max gap {pair_gap:.1e}, full distance {dist:.3e}, size-3 hyperedges ({ta}, {tb})");
    if pair_gap <= 1e-9 && dist > 1e-3 && (ta, tb) == (2, 0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------- learning signal

/// Expected MRR of a random scorer with 100 negatives: `H₁₀₁ / 101`.
fn random_baseline() -> f64 {
    (1..=101).map(|r| 1.0 / r as f64).sum::<f64>() / 101.0
}

const MAX_EPOCHS: usize = 50;

/// Best validation MRR per seed. A seed stops once its best reaches the
/// target: the best over all 50 epochs can only be higher.
fn learning_signal() -> Outcome {
    let target = 3.0 * random_baseline();
    let mut bests = Vec::new();
    for seed in 0..3u64 {
        let g = common::learning_dataset(seed);
        let cfg = ModelConfig {
            emb_dim: 32,
            time_dim: 16,
            mem_dim: 32,
            hidden: 32,
            neighbor_cap: 10,
            ..ModelConfig::default()
        };
        let splits = Splits::new(g.len(), &SplitSpec::default()).unwrap();
        let tc = TrainConfig {
            lr: 3e-3,
            epochs: MAX_EPOCHS,
            seed,
            ..TrainConfig::default()
        };
        let mp = ModelParams::new(cfg, 0, seed).unwrap();
        let mut tr = Trainer::new(&g, mp, tc, BuilderConfig::default(), splits.train.clone()).unwrap();
        let mut best = 0.0f64;
        let mut epochs = 0;
        for epoch in 1..=MAX_EPOCHS {
            epochs = epoch;
            let mut st = tr.new_state().unwrap();
            let seed = tr.epoch_seed(epoch);
            tr.train_epoch(&mut st, splits.train.clone(), seed).unwrap();
            best = best.max(tr.evaluate_mrr(&mut st, splits.val.clone()).unwrap().mrr);
            if best >= target {
                break;
            }
        }
        println!("    seed {seed}: {} events, best val MRR {best:.4} after {epochs} epochs", g.len());
        bests.push(best);
    }
    let mean = bests.iter().sum::<f64>() / bests.len() as f64;
    let detail = format!("mean best val MRR {mean:.4} (target {target:.4})");
    if mean >= target {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------- memory footprint

fn footprint(n: usize, b: usize, edges: &[(usize, usize)], rounds: usize) -> f64 {
    let events: Vec<Event> = (0..rounds)
        .flat_map(|r| edges.iter().enumerate().map(move |(i, &(u, v))| Event::new(u, v, (r * edges.len() + i) as f64)))
        .collect();
    let g = TemporalGraph::homogeneous(n, events.clone(), 0).unwrap();
    let mut bld = HyperedgeBuilder::new(n, b);
    for e in &events {
        bld.ingest(e.src, e.dst, e.time).unwrap();
    }
    bld.finish(events.last().unwrap().time);
    memory_footprint_report(&bld.registry, &g).ratio
}

fn memory_reduction() -> Outcome {
    let n = 30;
    let triangles: Vec<(usize, usize)> =
        (0..n / 3).flat_map(|k| [(3 * k, 3 * k + 1), (3 * k + 1, 3 * k + 2), (3 * k, 3 * k + 2)]).collect();
    let pairs: Vec<(usize, usize)> = (0..n / 2).map(|k| (2 * k, 2 * k + 1)).collect();
    let tri = footprint(n, 6, &triangles, 3);
    let pair = footprint(n, 6, &pairs, 3);
    let detail = format!("triangles {tri:.3} (≤ 0.7), disjoint pairs {pair} (= 0.5)");
    if tri <= 0.7 && pair == 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// -------------------------------------------------------------- determinism

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut metrics = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = RunConfig::default();
        cfg.data.htsbm = Some(HtsbmParams::duration_experiment());
        cfg.data.seed = Some(5);
        cfg.model = ModelConfig {
            emb_dim: 8,
            time_dim: 4,
            mem_dim: 8,
            hidden: 8,
            neighbor_cap: 5,
            ..ModelConfig::default()
        };
        cfg.train.epochs = 2;
        cfg.train.lr = 1e-2;
        cfg.train.eval_negatives = 20;
        cfg.train.seed = 9;
        cfg.output.directory = root.path().join(run);
        cmd_train(&cfg).map_err(|e| e.to_string())?;
        metrics.push(std::fs::read(root.path().join(run).join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    if metrics[0] == metrics[1] && !metrics[0].is_empty() {
        Ok(format!("{} identical bytes", metrics[0].len()))
    } else {
        Err("metrics differ between identical runs".into())
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradients", gradient_checks),
        ("clique_oracle", clique_oracle),
        ("hyperedge_invariants", invariant_suite),
        ("duration_trend", duration_trend),
        ("expressiveness", expressiveness),
        ("learning_signal", learning_signal),
        ("memory_reduction", memory_reduction),
        ("determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {} {name}: {detail} [{secs:.1}s]", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
