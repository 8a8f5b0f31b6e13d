//! Run configuration: one TOML document per run, with dotted `key=value`
//! overrides applied before validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{load_events_with, GraphKind, LoadOptions, NodeId, SideRule, SplitSpec, TemporalGraph};
use crate::htsbm::{sample_htsbm, HtsbmParams};
use crate::model::ModelConfig;
use crate::train::{BuilderConfig, TrainConfig};

/// Overrides the root that relative output directories resolve against.
pub const OUTPUT_ROOT_ENV: &str = "HTGN_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub builder: BuilderConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

/// Either an event CSV (`path`) or generator parameters (`htsbm` + `seed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub kind: GraphKind,
    pub d_e: usize,
    /// JSON sidecar naming the side-B ids of a bipartite file.
    pub side_b_file: Option<PathBuf>,
    pub seed: Option<u64>,
    pub split: SplitSpec,
    pub htsbm: Option<HtsbmParams>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            kind: GraphKind::Homogeneous,
            d_e: 0,
            side_b_file: None,
            seed: None,
            split: SplitSpec::default(),
            htsbm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Snapshot sizes in edges, strictly ascending.
    pub durations: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            durations: HtsbmParams::duration_grid(),
            seeds: 20,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("runs/default"),
        }
    }
}

/// A loaded stream plus the planted hyperedges when it was generated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: TemporalGraph,
    pub planted: Option<Vec<Vec<NodeId>>>,
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key in `{key}`")))?;
    let mut table = root;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides, validates.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
            set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (defaults only when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.split.validate()?;
        self.builder.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if let Some(p) = &self.data.htsbm {
            p.validate()?;
        }
        Ok(())
    }

    /// The fully resolved document, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of the resolved config.
    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// `output.directory`, resolved against `$HTGN_OUTPUT_ROOT` when it is
    /// relative and the variable is set.
    pub fn output_dir(&self) -> PathBuf {
        let dir = &self.output.directory;
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir.clone(),
        }
    }

    /// Loads `data.path`, or samples the generator with `data.seed`.
    pub fn dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        if let Some(path) = &d.path {
            let opts = LoadOptions {
                kind: d.kind,
                d_e: d.d_e,
                sides: d.side_b_file.clone().map_or(SideRule::DestinationIsSideB, SideRule::Sidecar),
            };
            return Ok(Dataset {
                graph: load_events_with(path, &opts)?,
                planted: None,
            });
        }
        let p = d
            .htsbm
            .as_ref()
            .ok_or_else(|| Error::Config("data needs either `path` or an `htsbm` section".into()))?;
        let seed = d.seed.ok_or_else(|| Error::Config("data.seed is required to generate a dataset".into()))?;
        if d.kind != GraphKind::Homogeneous || d.d_e != 0 {
            return Err(Error::Config("generated datasets are homogeneous without edge features".into()));
        }
        let s = sample_htsbm(p, seed)?;
        Ok(Dataset {
            graph: s.graph,
            planted: Some(s.planted),
        })
    }
}
