//! `htgn` command line: generate, build, sweep, train, eval, report.
//!
//! Every command resolves its configuration (file, then `--set`
//! overrides), writes the resolved document to `config.toml` in the output
//! directory, and prints a JSON summary on stdout.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{write_events, GraphKind, TemporalGraph};
use crate::htsbm::{burst_width, duration_sweep, HtsbmParams};
use crate::hyperedge::{HyperedgeBuilder, HyperedgeRegistry};
use crate::model::ModelParams;
use crate::train::{memory_footprint_report, write_metrics, Splits, Trainer};

#[derive(Debug, Parser)]
#[command(name = "htgn", version, about = "Hyperedge temporal graph network toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample an HT-SBM stream: events.csv and planted.jsonl.
    Generate(Common),
    /// Run hyperedge construction: hyperedges.jsonl and merges.jsonl.
    Build(Common),
    /// Snapshot-duration sweep of reconstruction accuracy.
    Sweep(Common),
    /// Train and validate; writes checkpoint.json and metrics.csv.
    Train(Common),
    /// MRR of a checkpoint on the validation or test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Score with a stub that always ranks the true destination first.
        #[arg(long)]
        oracle: bool,
    },
    /// Summarize a training run's outputs into report.json.
    Report(Common),
}

/// Files written by a command and its stdout summary.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut out = Out { dir, files: Vec::new() };
        out.write("config.toml", cfg.to_toml().as_bytes())?;
        Ok(out)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn finish(self, summary: Value) -> Outcome {
        Outcome {
            files: self.files,
            summary,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate(c) => cmd_generate(&resolve(&c)?),
        Command::Build(c) => cmd_build(&resolve(&c)?),
        Command::Sweep(c) => cmd_sweep(&resolve(&c)?),
        Command::Train(c) => cmd_train(&resolve(&c)?),
        Command::Eval {
            common,
            checkpoint,
            split,
            oracle,
        } => cmd_eval(&resolve(&common)?, checkpoint.as_deref(), split, oracle),
        Command::Report(c) => cmd_report(&resolve(&c)?),
    }
}

fn resolve(c: &Common) -> Result<RunConfig> {
    RunConfig::load(c.config.as_deref(), &c.set)
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.data.htsbm.is_none() {
        return Err(Error::Config("generate needs a [data.htsbm] section".into()));
    }
    let ds = cfg.dataset()?;
    let mut out = Out::new(cfg)?;
    let events = out.path("events.csv");
    write_events(&ds.graph, &events)?;
    let planted = ds.planted.unwrap_or_default();
    let mut lines = String::new();
    for p in &planted {
        lines.push_str(&json!({ "members": p }).to_string());
        lines.push('\n');
    }
    out.write("planted.jsonl", lines.as_bytes())?;
    Ok(out.finish(json!({
        "run_id": cfg.run_id(),
        "events": ds.graph.len(),
        "planted": planted.len(),
    })))
}

/// Runs the builder over `g`; returns the final registry and the merge
/// log (one JSON line per merge).
fn build_structure(cfg: &RunConfig, g: &TemporalGraph) -> Result<(HyperedgeRegistry, String)> {
    let mut log = String::new();
    match g.kind() {
        GraphKind::Homogeneous => {
            let b = if cfg.builder.pairwise_only { usize::MAX } else { cfg.builder.b };
            let mut builder = HyperedgeBuilder::new(g.num_nodes(), b);
            let mut merges = Vec::new();
            for e in g.events() {
                merges.extend(builder.ingest(e.src, e.dst, e.time)?.merges);
            }
            if !cfg.builder.pairwise_only {
                merges.extend(builder.finish(g.events().last().map_or(0.0, |e| e.time)));
            }
            for m in &merges {
                log.push_str(&m.to_json_line());
                log.push('\n');
            }
            Ok((builder.registry, log))
        }
        GraphKind::Bipartite => {
            let t_prime = cfg.builder.resolve_t_prime(g.events());
            let mut reg = HyperedgeRegistry::bipartite(g.num_nodes(), &g.side_b_nodes())?;
            for chunk in g.events().chunks(cfg.builder.b) {
                for e in chunk {
                    reg.ingest_link_bipartite(e.src, e.dst, e.time, cfg.builder.capacity, t_prime)?;
                }
                reg.prune_stale_memberships(chunk[chunk.len() - 1].time, t_prime)?;
            }
            Ok((reg, log))
        }
    }
}

pub fn cmd_build(cfg: &RunConfig) -> Result<Outcome> {
    let ds = cfg.dataset()?;
    let g = &ds.graph;
    let (reg, log) = build_structure(cfg, g)?;
    reg.check_invariants()?;
    let mut out = Out::new(cfg)?;
    out.write("hyperedges.jsonl", reg.dump_jsonl().as_bytes())?;
    out.write("merges.jsonl", log.as_bytes())?;
    let fp = memory_footprint_report(&reg, g);
    let mut sizes = std::collections::BTreeMap::new();
    for e in reg.hyperedges() {
        *sizes.entry(e.len()).or_insert(0usize) += 1;
    }
    let summary = json!({
        "run_id": cfg.run_id(),
        "events": g.len(),
        "live_hyperedges": reg.live_count(),
        "size_histogram": sizes,
        "footprint": fp,
    });
    out.json("build.json", &summary)?;
    Ok(out.finish(summary))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let p = cfg.data.htsbm.clone().unwrap_or_else(HtsbmParams::duration_experiment);
    let s = &cfg.sweep;
    let res = duration_sweep(&p, &s.durations, s.seeds, s.base_seed)?;
    let bw = burst_width(&p);
    let rho = res.trend_after(bw);
    let first_post = res.summary.iter().find(|r| r.duration > bw).map(|r| r.mean_jaccard);
    let mut out = Out::new(cfg)?;
    out.write("sweep_rows.csv", res.rows_csv().as_bytes())?;
    out.write("sweep_summary.csv", res.summary_csv().as_bytes())?;
    let summary = json!({
        "run_id": cfg.run_id(),
        "burst_width": bw,
        "spearman": rho,
        "first_post_formation_jaccard": first_post,
        "decreasing_trend": rho.is_some_and(|r| r <= -0.8),
    });
    out.json("sweep.json", &summary)?;
    Ok(out.finish(summary))
}

fn model_sidecar(cfg: &RunConfig, edge_dim: usize) -> Value {
    json!({
        "format": "htgn-model",
        "model": cfg.model,
        "edge_dim": edge_dim,
        "seed": cfg.train.seed,
        "registry": "hyperedges.jsonl",
    })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Outcome> {
    let ds = cfg.dataset()?;
    let g = &ds.graph;
    let splits = Splits::new(g.len(), &cfg.data.split)?;
    let mp = ModelParams::new(cfg.model.clone(), g.edge_dim(), cfg.train.seed)?;
    let mut out = Out::new(cfg)?;
    out.json("model.json", &model_sidecar(cfg, g.edge_dim()))?;
    if cfg.train.epochs == 0 {
        let p = out.path("checkpoint.json");
        mp.store.save(&p)?;
        return Ok(out.finish(json!({ "run_id": cfg.run_id(), "epochs_run": 0 })));
    }
    let mut trainer = Trainer::new(g, mp, cfg.train.clone(), cfg.builder.clone(), splits.train.clone())?;
    let mut rows = Vec::new();
    let fit = trainer.fit(&splits, |r| {
        rows.push(r.clone());
        eprintln!(
            "epoch {} {}: loss {} mrr {}",
            r.epoch,
            r.split,
            r.loss.map_or("-".into(), |l| format!("{l:.4}")),
            r.mrr.map_or("-".into(), |m| format!("{m:.4}"))
        );
    })?;
    let metrics = out.path("metrics.csv");
    write_metrics(&rows, &metrics)?;
    let ckpt = out.path("checkpoint.json");
    trainer.mp.store.save(&ckpt)?;

    let mut state = trainer.new_state()?;
    trainer.advance(&mut state, 0..splits.test.start)?;
    let test = if splits.test.is_empty() {
        None
    } else {
        Some(trainer.evaluate_mrr(&mut state, splits.test.clone())?)
    };
    out.write("hyperedges.jsonl", state.registry().dump_jsonl().as_bytes())?;
    let fp = memory_footprint_report(state.registry(), g);
    let summary = json!({
        "run_id": cfg.run_id(),
        "fit": fit,
        "test": test,
        "footprint": fp,
    });
    out.json("train.json", &summary)?;
    Ok(out.finish(summary))
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, split: SplitName, oracle: bool) -> Result<Outcome> {
    let ds = cfg.dataset()?;
    let g = &ds.graph;
    let splits = Splits::new(g.len(), &cfg.data.split)?;
    let mut mp = ModelParams::new(cfg.model.clone(), g.edge_dim(), cfg.train.seed)?;
    if !oracle {
        let path = checkpoint.ok_or_else(|| Error::Checkpoint("eval needs --checkpoint".into()))?;
        mp.store.load(path)?;
    }
    let target = match split {
        SplitName::Val => splits.val.clone(),
        SplitName::Test => splits.test.clone(),
    };
    let trainer = Trainer::new(g, mp, cfg.train.clone(), cfg.builder.clone(), splits.train)?;
    let res = if oracle {
        trainer.oracle_mrr(target)?
    } else {
        trainer.evaluate_split(target)?
    };
    let mut out = Out::new(cfg)?;
    let summary = json!({
        "run_id": cfg.run_id(),
        "split": format!("{split:?}").to_lowercase(),
        "scorer": if oracle { "oracle" } else { "model" },
        "result": res,
    });
    out.json("eval.json", &summary)?;
    Ok(out.finish(summary))
}

pub fn cmd_report(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.output_dir();
    let path = dir.join("metrics.csv");
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
    let mut best: Option<(usize, f64)> = None;
    let mut last_loss = None;
    let mut last_fp = None;
    let mut epochs = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::io(&path, e.into()))?;
        let num = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok());
        let epoch = num(0).unwrap_or(0.0) as usize;
        epochs = epochs.max(epoch);
        match rec.get(1) {
            Some("train") => last_loss = num(2),
            Some("val") => {
                if let Some(m) = num(3) {
                    if best.is_none_or(|(_, b)| m > b) {
                        best = Some((epoch, m));
                    }
                }
            }
            _ => {}
        }
        last_fp = Some(json!({ "peak_slots": num(4), "ratio": num(5) }));
    }
    let mut out = Out::new(cfg)?;
    let summary = json!({
        "run_id": cfg.run_id(),
        "epochs": epochs,
        "best_val": best.map(|(e, m)| json!({ "epoch": e, "mrr": m })),
        "final_train_loss": last_loss,
        "footprint": last_fp,
        "config": cfg,
    });
    out.json("report.json", &summary)?;
    Ok(out.finish(summary))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match run(cli) {
        Ok(o) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", o.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
