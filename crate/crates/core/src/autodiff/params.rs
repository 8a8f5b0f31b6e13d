use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

const FORMAT: &str = "htgn-params";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    params: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Registers a trainable tensor. Panics on a duplicate name.
    pub fn add(&mut self, name: &str, t: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_owned());
        self.tensors.push(t.with_grad());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn get(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Freezes or unfreezes one parameter.
    pub fn set_trainable(&mut self, id: ParamId, on: bool) {
        let t = &mut self.tensors[id.0];
        t.requires_grad = on;
        t.grad = on.then(|| vec![0.0; t.data.len()]);
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) {
        if let Some(buf) = &mut self.tensors[id.0].grad {
            buf.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            params: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| Entry {
                    name: n.clone(),
                    shape: [t.rows, t.cols],
                    values: t.data.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    /// Overwrites values from a checkpoint; every stored parameter must be
    /// present with the same shape.
    pub fn load_json(&mut self, s: &str) -> Result<()> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut seen = vec![false; self.tensors.len()];
        for e in ck.params {
            let id = self
                .get(&e.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", e.name)))?;
            let t = &mut self.tensors[id.0];
            if [t.rows, t.cols] != e.shape || e.values.len() != t.rows * t.cols {
                return Err(Error::Checkpoint(format!(
                    "{}: shape {:?} does not match ({}, {})",
                    e.name, e.shape, t.rows, t.cols
                )));
            }
            if e.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Checkpoint(format!("{}: non-finite value", e.name)));
            }
            t.values_mut().copy_from_slice(&e.values);
            seen[id.0] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!("missing parameter {}", self.names[i])));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.load_json(&s)
    }
}
