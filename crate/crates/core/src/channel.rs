//! Shared-medium model: collisions, sub-slot timing capture, and erasures.
//!
//! Time is in integer microseconds. Randomness comes from per-loop streams
//! supplied by the caller, so one loop's draws never shift another's.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts seconds to whole microseconds, rounding to nearest.
pub fn secs_to_us(secs: f64) -> u64 {
    (secs * 1e6).round() as u64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// A slot succeeds only if exactly one loop transmits in it.
    StrictCollision,
    /// Transmissions start at random offsets inside the slot and only
    /// collide if their airtimes overlap.
    #[default]
    OffsetCapture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    /// Independent loss probability of every data or poll packet.
    pub erasure_prob: f64,
    /// Airtime of one data or poll packet, seconds.
    pub tx_duration: f64,
    pub slot_duration: f64,
    /// Probability that two overlapping packets are both decoded anyway.
    pub capture_prob: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            mode: ChannelMode::OffsetCapture,
            erasure_prob: 0.05,
            tx_duration: 0.003,
            slot_duration: 0.010,
            capture_prob: 0.1,
        }
    }
}

impl ChannelConfig {
    /// Strict collisions and no erasures: the setting the closed-form
    /// mean-AoI results assume.
    pub fn ideal() -> Self {
        Self { mode: ChannelMode::StrictCollision, erasure_prob: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.erasure_prob) {
            return Err(Error::config(format!("erasure_prob {} outside [0, 1)", self.erasure_prob)));
        }
        if !(0.0..=1.0).contains(&self.capture_prob) {
            return Err(Error::config(format!("capture_prob {} outside [0, 1]", self.capture_prob)));
        }
        if !(self.tx_duration > 0.0 && self.slot_duration > 0.0) {
            return Err(Error::config("tx_duration and slot_duration must be positive"));
        }
        if self.tx_us() == 0 || self.tx_us() > self.slot_us() {
            return Err(Error::config(format!(
                "tx_duration {} s must be at least 1 us and fit in slot_duration {} s",
                self.tx_duration, self.slot_duration
            )));
        }
        Ok(())
    }

    pub fn tx_us(&self) -> u64 {
        secs_to_us(self.tx_duration)
    }

    pub fn slot_us(&self) -> u64 {
        secs_to_us(self.slot_duration)
    }

    /// Start offset of a slotted transmission: zero under strict
    /// collisions, uniform over `[0, slot − tx]` otherwise.
    pub fn draw_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.mode {
            ChannelMode::StrictCollision => 0,
            ChannelMode::OffsetCapture => rng.random_range(0..=self.slot_us() - self.tx_us()),
        }
    }

    fn erased<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        self.erasure_prob > 0.0 && rng.random_bool(self.erasure_prob)
    }
}

/// One transmission attempt within a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotTx {
    pub loop_idx: usize,
    /// Start offset from the slot boundary, microseconds.
    pub offset_us: u64,
}

/// Decides which of the slot's transmissions reach the gateway.
///
/// `rngs[i]` is loop `i`'s channel stream. A capture draw for an overlapping
/// pair comes from the stream of the pair's lower loop index; each survivor
/// then draws its own erasure. Returned indices are sorted.
pub fn resolve_slot<R: Rng>(txs: &[SlotTx], cfg: &ChannelConfig, rngs: &mut [R]) -> Vec<usize> {
    let mut order: Vec<SlotTx> = txs.to_vec();
    order.sort_by_key(|t| t.loop_idx);
    let mut alive = vec![true; order.len()];
    match cfg.mode {
        ChannelMode::StrictCollision => {
            if order.len() > 1 {
                alive.fill(false);
            }
        }
        ChannelMode::OffsetCapture => {
            let tx = cfg.tx_us();
            for i in 0..order.len() {
                for j in i + 1..order.len() {
                    if order[i].offset_us.abs_diff(order[j].offset_us) >= tx {
                        continue;
                    }
                    let captured = cfg.capture_prob > 0.0
                        && rngs[order[i].loop_idx].random_bool(cfg.capture_prob);
                    if !captured {
                        alive[i] = false;
                        alive[j] = false;
                    }
                }
            }
        }
    }
    order
        .iter()
        .zip(alive)
        .filter(|(t, ok)| *ok && !cfg.erased(&mut rngs[t.loop_idx]))
        .map(|(t, _)| t.loop_idx)
        .collect()
}

/// Outcome of a collision-free point-to-point packet.
pub fn resolve_pointtopoint<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> bool {
    !cfg.erased(rng)
}
