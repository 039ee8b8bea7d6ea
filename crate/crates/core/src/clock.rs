//! Mapping from local clock readings (integer microseconds) to epochs and slots.

use crate::slot_tree::EpochConfig;

pub const MICROS_PER_SEC: u64 = 1_000_000;

/// Epoch geometry shared by every node; the epoch id inside is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timebase {
    geometry: EpochConfig,
}

impl Timebase {
    pub fn new(geometry: EpochConfig) -> Self {
        Timebase { geometry }
    }

    pub fn epoch_us(&self) -> u64 {
        self.geometry.epoch_len() * MICROS_PER_SEC
    }

    pub fn slot_us(&self) -> u64 {
        self.geometry.delta() * MICROS_PER_SEC
    }

    pub fn config(&self, epoch_id: u64) -> EpochConfig {
        self.geometry.with_epoch(epoch_id)
    }

    pub fn slots(&self) -> u64 {
        self.geometry.slots()
    }

    pub fn epoch_at(&self, now: u64) -> u64 {
        now / self.epoch_us()
    }

    pub fn slot_at(&self, now: u64) -> u64 {
        ((now % self.epoch_us()) / self.slot_us()).min(self.slots() - 1)
    }

    pub fn epoch_start(&self, epoch_id: u64) -> u64 {
        epoch_id.saturating_mul(self.epoch_us())
    }

    /// Absolute `[start, end)` of a slot; the last slot ends with the epoch.
    pub fn slot_window(&self, epoch_id: u64, slot: u64) -> (u64, u64) {
        let base = self.epoch_start(epoch_id);
        let start = base.saturating_add(slot.saturating_mul(self.slot_us()));
        let end = start.saturating_add(self.slot_us()).min(base.saturating_add(self.epoch_us()));
        (start, end)
    }

    /// `now ∈ [start − ε, end + ε)`.
    pub fn within_slot(&self, epoch_id: u64, slot: u64, now: u64, epsilon: u64) -> bool {
        let (start, end) = self.slot_window(epoch_id, slot);
        now.saturating_add(epsilon) >= start && now < end.saturating_add(epsilon)
    }
}
