use std::collections::BTreeMap;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hyperedge::SlotId;

/// One memory vector per slot. Values written during the current tape
/// live in an overlay of tape handles so gradients can flow through them;
/// [`MemoryBank::persist`] copies them back as constants.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    dim: usize,
    values: Vec<Tensor>,
    last_update: Vec<f64>,
    live: Vec<bool>,
    overlay: BTreeMap<SlotId, Var>,
}

impl MemoryBank {
    pub fn new(dim: usize) -> Self {
        MemoryBank {
            dim,
            values: Vec::new(),
            last_update: Vec::new(),
            live: Vec::new(),
            overlay: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Slots allocated so far.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn ensure(&mut self, slot: SlotId) {
        while self.values.len() <= slot.0 {
            self.values.push(Tensor::zeros(self.dim, 1));
            self.last_update.push(0.0);
            self.live.push(false);
        }
    }

    /// Marks a slot occupied with a zero vector.
    pub fn occupy(&mut self, slot: SlotId, t: f64) {
        self.ensure(slot);
        self.values[slot.0] = Tensor::zeros(self.dim, 1);
        self.last_update[slot.0] = t;
        self.live[slot.0] = true;
        self.overlay.remove(&slot);
    }

    /// Zeroes and releases a slot.
    pub fn free(&mut self, slot: SlotId) {
        self.ensure(slot);
        self.values[slot.0] = Tensor::zeros(self.dim, 1);
        self.live[slot.0] = false;
        self.overlay.remove(&slot);
    }

    pub fn is_live(&self, slot: SlotId) -> bool {
        self.live.get(slot.0).copied().unwrap_or(false)
    }

    pub fn last_update(&self, slot: SlotId) -> Option<f64> {
        self.is_live(slot).then(|| self.last_update[slot.0])
    }

    /// The slot's current value on `tape`.
    pub fn read(&self, tape: &mut Tape, slot: SlotId) -> Result<Var> {
        if !self.is_live(slot) {
            return Err(Error::Consistency(format!("read of unoccupied memory slot {}", slot.0)));
        }
        Ok(match self.overlay.get(&slot) {
            Some(&v) => v,
            None => tape.constant(&self.values[slot.0]),
        })
    }

    pub fn write(&mut self, slot: SlotId, v: Var, t: f64) -> Result<()> {
        if !self.is_live(slot) {
            return Err(Error::Consistency(format!("write to unoccupied memory slot {}", slot.0)));
        }
        self.overlay.insert(slot, v);
        self.last_update[slot.0] = t;
        Ok(())
    }

    /// Current values of a slot, overlay included.
    pub fn value(&self, tape: &Tape, slot: SlotId) -> Option<Vec<f64>> {
        if !self.is_live(slot) {
            return None;
        }
        Some(match self.overlay.get(&slot) {
            Some(&v) => tape.value(v).to_vec(),
            None => self.values[slot.0].values().to_vec(),
        })
    }

    /// Detaches overlay values into the bank. Call before the tape is
    /// cleared.
    pub fn persist(&mut self, tape: &Tape) {
        for (slot, v) in std::mem::take(&mut self.overlay) {
            self.values[slot.0] = tape.to_tensor(v);
        }
    }

    /// Drops overlay values without keeping them.
    pub fn discard_overlay(&mut self) {
        self.overlay.clear();
    }

    pub fn has_pending(&self) -> bool {
        !self.overlay.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_round_trip() {
        let mut bank = MemoryBank::new(2);
        let mut tape = Tape::new();
        assert!(bank.read(&mut tape, SlotId(0)).is_err());
        bank.occupy(SlotId(1), 0.0);
        let v = tape.constant_column(vec![1.0, 2.0]);
        bank.write(SlotId(1), v, 3.0).unwrap();
        assert_eq!(bank.read(&mut tape, SlotId(1)).unwrap(), v);
        bank.persist(&tape);
        tape.clear();
        assert_eq!(bank.value(&tape, SlotId(1)).unwrap(), vec![1.0, 2.0]);
        assert_eq!(bank.last_update(SlotId(1)), Some(3.0));
        bank.free(SlotId(1));
        assert!(bank.value(&tape, SlotId(1)).is_none());
        bank.occupy(SlotId(1), 4.0);
        assert_eq!(bank.value(&tape, SlotId(1)).unwrap(), vec![0.0, 0.0]);
    }
}
