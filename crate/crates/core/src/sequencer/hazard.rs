//! Instruction monitor, per-register validity table and hazard table.
//!
//! Resources are the physical vector registers `0..vrf_depth`, followed by
//! two pseudo-registers for the mask register and for memory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HazardError {
    #[error("instruction monitor full")]
    MonitorFull,
}

/// Per-lane element counts for one instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneSchedule {
    pub vl: Vec<u32>,
    pub uops_remaining: Vec<u32>,
}

impl LaneSchedule {
    pub fn vl_max(&self) -> u32 {
        self.vl.iter().copied().max().unwrap_or(0)
    }
}

/// Lane `i` receives `floor(avl/n) + (i < avl mod n)` elements.
pub fn partition_vl(avl: u32, n_lane: u32) -> LaneSchedule {
    let (q, r) = (avl / n_lane, avl % n_lane);
    let vl: Vec<u32> = (0..n_lane).map(|i| q + u32::from(i < r)).collect();
    LaneSchedule { uops_remaining: vl.clone(), vl }
}

/// An inclusive span of resource indices.
pub type Span = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotState {
    Issued,
    Executing,
    Committed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorSlot {
    pub seq: u64,
    pub pc: usize,
    pub reads: Vec<Span>,
    pub writes: Vec<Span>,
    pub state: SlotState,
}

/// Up to `n_id` in-flight instructions, each owning one one-hot id.
#[derive(Debug, Clone)]
pub struct InstrMonitor {
    pub slots: Vec<Option<MonitorSlot>>,
}

impl InstrMonitor {
    pub fn new(n_id: u32) -> Self {
        Self { slots: vec![None; n_id as usize] }
    }

    pub fn active(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_full(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    /// Claims the lowest free slot and returns its one-hot id.
    pub fn allocate(&mut self, slot: MonitorSlot) -> Result<u64, HazardError> {
        let i = self.slots.iter().position(Option::is_none).ok_or(HazardError::MonitorFull)?;
        self.slots[i] = Some(slot);
        Ok(1 << i)
    }

    pub fn release(&mut self, id: u64) -> Option<MonitorSlot> {
        self.slots[id.trailing_zeros() as usize].take()
    }

    pub fn get(&self, id: u64) -> Option<&MonitorSlot> {
        self.slots.get(id.trailing_zeros() as usize)?.as_ref()
    }

    pub fn get_mut(&mut self, id: u64) -> Option<&mut MonitorSlot> {
        self.slots.get_mut(id.trailing_zeros() as usize)?.as_mut()
    }
}

/// Occupation masks per resource: which in-flight ids read or write it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityTable {
    readers: Vec<u64>,
    writers: Vec<u64>,
}

impl ValidityTable {
    pub fn new(n_resources: u32) -> Self {
        Self { readers: vec![0; n_resources as usize], writers: vec![0; n_resources as usize] }
    }

    pub fn len(&self) -> usize {
        self.readers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readers.is_empty()
    }

    pub fn valid(&self, r: u32) -> bool {
        (self.readers[r as usize] | self.writers[r as usize]) != 0
    }

    pub fn id_vector(&self, r: u32) -> (u64, u64) {
        (self.readers[r as usize], self.writers[r as usize])
    }

    pub fn all_invalid(&self) -> bool {
        self.readers.iter().chain(&self.writers).all(|&m| m == 0)
    }

    pub fn mark(&mut self, id: u64, reads: &[Span], writes: &[Span]) {
        for &(lo, hi) in reads {
            for m in &mut self.readers[lo as usize..=hi as usize] {
                *m |= id;
            }
        }
        for &(lo, hi) in writes {
            for m in &mut self.writers[lo as usize..=hi as usize] {
                *m |= id;
            }
        }
    }

    pub fn clear(&mut self, id: u64, reads: &[Span], writes: &[Span]) {
        for &(lo, hi) in reads.iter().chain(writes) {
            for r in lo as usize..=hi as usize {
                self.readers[r] &= !id;
                self.writers[r] &= !id;
            }
        }
    }

    /// OR of conflicting ids: a new reader conflicts with in-flight writers,
    /// a new writer with in-flight readers and writers.
    pub fn check(&self, reads: &[Span], writes: &[Span]) -> u64 {
        let mut ids = 0;
        for &(lo, hi) in reads {
            ids |= self.writers[lo as usize..=hi as usize].iter().fold(0, |a, &m| a | m);
        }
        for &(lo, hi) in writes {
            let (r, w) = (&self.readers[lo as usize..=hi as usize], &self.writers[lo as usize..=hi as usize]);
            ids |= r.iter().chain(w).fold(0, |a, &m| a | m);
        }
        ids
    }
}

/// Row `j` holds the ids instruction `j` waits for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HazardTable {
    rows: Vec<u64>,
}

impl HazardTable {
    pub fn new(n_id: u32) -> Self {
        Self { rows: vec![0; n_id as usize] }
    }

    pub fn set_row(&mut self, id: u64, deps: u64) {
        debug_assert_eq!(deps & id, 0, "self dependency");
        self.rows[id.trailing_zeros() as usize] = deps;
    }

    pub fn row(&self, id: u64) -> u64 {
        self.rows[id.trailing_zeros() as usize]
    }

    /// Removes a committed instruction's row and column.
    pub fn retire(&mut self, id: u64) {
        self.rows[id.trailing_zeros() as usize] = 0;
        for r in &mut self.rows {
            *r &= !id;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }
}

/// Conflict vector for a new instruction; fails when no slot is free.
pub fn check_hazard(reads: &[Span], writes: &[Span], validity: &ValidityTable, monitor: &InstrMonitor) -> Result<u64, HazardError> {
    if monitor.is_full() {
        return Err(HazardError::MonitorFull);
    }
    Ok(validity.check(reads, writes))
}
