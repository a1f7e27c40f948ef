//! Medium-access policies. Three are contention-based and decided at the
//! sources (ALOHA, slotted ALOHA, ADRA); four are scheduled by the gateway
//! (round robin, MEF, WiFresh, pMEF).
//!
//! Decision functions take and return zero-based loop indices and break
//! ties toward the lowest index.

mod gateway;
mod packet;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aoi::{ErrorMetric, MseTable};
use crate::error::{Error, Result};

pub use gateway::{gw_on_data, DataOutcome, GwLoopView};
pub use packet::{Endpoint, LcfsQueue, Packet, PacketKind};

pub const DEFAULT_FRAME_LEN: usize = 20;

/// Protocol family, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[serde(alias = "ra")]
    Aloha,
    #[serde(alias = "sa")]
    SlottedAloha,
    Adra,
    #[serde(alias = "rr")]
    RoundRobin,
    Mef,
    Wifresh,
    Pmef,
}

impl Protocol {
    pub const ALL: [Protocol; 7] = [
        Protocol::Aloha,
        Protocol::SlottedAloha,
        Protocol::Adra,
        Protocol::RoundRobin,
        Protocol::Mef,
        Protocol::Wifresh,
        Protocol::Pmef,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Aloha => "aloha",
            Protocol::SlottedAloha => "slotted_aloha",
            Protocol::Adra => "adra",
            Protocol::RoundRobin => "round_robin",
            Protocol::Mef => "mef",
            Protocol::Wifresh => "wifresh",
            Protocol::Pmef => "pmef",
        }
    }

    pub fn is_polling(self) -> bool {
        matches!(self, Protocol::Wifresh | Protocol::Pmef)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "aloha" | "ra" => Protocol::Aloha,
            "slotted_aloha" | "sa" => Protocol::SlottedAloha,
            "adra" => Protocol::Adra,
            "round_robin" | "rr" => Protocol::RoundRobin,
            "mef" => Protocol::Mef,
            "wifresh" => Protocol::Wifresh,
            "pmef" => Protocol::Pmef,
            other => return Err(Error::config(format!("unknown protocol '{other}'"))),
        })
    }
}

/// A protocol together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchedulerPolicy {
    Aloha,
    SlottedAloha { p: f64 },
    Adra { threshold: u32, p: f64 },
    RoundRobin,
    Mef { frame_len: usize, metric: ErrorMetric },
    Wifresh,
    Pmef { metric: ErrorMetric },
}

impl SchedulerPolicy {
    pub fn protocol(&self) -> Protocol {
        match self {
            SchedulerPolicy::Aloha => Protocol::Aloha,
            SchedulerPolicy::SlottedAloha { .. } => Protocol::SlottedAloha,
            SchedulerPolicy::Adra { .. } => Protocol::Adra,
            SchedulerPolicy::RoundRobin => Protocol::RoundRobin,
            SchedulerPolicy::Mef { .. } => Protocol::Mef,
            SchedulerPolicy::Wifresh => Protocol::Wifresh,
            SchedulerPolicy::Pmef { .. } => Protocol::Pmef,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| {
            if p > 0.0 && p <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("access probability {p} outside (0, 1]")))
            }
        };
        match *self {
            SchedulerPolicy::SlottedAloha { p } | SchedulerPolicy::Adra { p, .. } => prob(p),
            SchedulerPolicy::Mef { frame_len, .. } if frame_len == 0 => {
                Err(Error::config("MEF frame length must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Error metric ranking loops, for the control-aware schedulers.
    pub fn metric(&self) -> Option<ErrorMetric> {
        match *self {
            SchedulerPolicy::Mef { metric, .. } | SchedulerPolicy::Pmef { metric } => Some(metric),
            _ => None,
        }
    }

    /// Short label, e.g. `mef` or `mef_mse` for the raw-MSE variant.
    pub fn label(&self) -> String {
        match self.metric() {
            Some(ErrorMetric::Mse) => format!("{}_mse", self.protocol()),
            _ => self.protocol().to_string(),
        }
    }
}

impl fmt::Display for SchedulerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerPolicy::SlottedAloha { p } => write!(f, "slotted_aloha(p={p:.4})"),
            SchedulerPolicy::Adra { threshold, p } => write!(f, "adra(δ={threshold}, p={p:.4})"),
            SchedulerPolicy::Mef { frame_len, metric } => write!(f, "mef(frame={frame_len}, {metric:?})"),
            SchedulerPolicy::Pmef { metric } => write!(f, "pmef({metric:?})"),
            other => f.write_str(other.protocol().as_str()),
        }
    }
}

/// Pure ALOHA sends whatever sample is waiting, right away.
pub fn aloha_on_sample(queue: &LcfsQueue) -> bool {
    !queue.is_empty()
}

/// Slotted ALOHA: transmit with probability `p`.
pub fn sa_on_slot<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    p >= 1.0 || rng.random_bool(p)
}

/// ADRA: silent while the destination age is below the threshold, otherwise
/// slotted ALOHA with probability `p`. No random draw is consumed while
/// silent.
pub fn adra_on_slot<R: Rng + ?Sized>(threshold: u32, p: f64, source_age: u64, rng: &mut R) -> bool {
    source_age >= u64::from(threshold) && sa_on_slot(p, rng)
}

/// Zero-based index of the loop served in slot `t` (`t ≥ 1`).
pub fn rr_next(t: u64, n: usize) -> usize {
    (t.saturating_sub(1) % n as u64) as usize
}

fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Greedy frame schedule. For each slot, every loop's predicted age grows by
/// one (the age it reaches by the end of the slot if left unserved), the loop
/// with the largest error metric at that age is picked, and its delivery is
/// assumed to succeed, resetting its age to one.
pub fn mef_build_schedule(ages: &[u64], tables: &mut [MseTable], metric: ErrorMetric, frame_len: usize) -> Vec<usize> {
    let mut predicted = ages.to_vec();
    let mut schedule = Vec::with_capacity(frame_len);
    if predicted.is_empty() {
        return schedule;
    }
    for _ in 0..frame_len {
        predicted.iter_mut().for_each(|a| *a += 1);
        let pick = argmax(predicted.iter().zip(tables.iter_mut()).map(|(&a, t)| t.metric(metric, a)));
        schedule.push(pick);
        predicted[pick] = 1;
    }
    schedule
}

/// WiFresh: poll the loop maximizing reliability times estimated age.
pub fn wifresh_next(ages: &[u64], reliability: &[f64]) -> usize {
    argmax(ages.iter().zip(reliability).map(|(&a, &r)| r * a as f64))
}

/// pMEF: poll the loop maximizing reliability times its error metric.
pub fn pmef_next(ages: &[u64], reliability: &[f64], tables: &mut [MseTable], metric: ErrorMetric) -> usize {
    argmax(
        ages.iter()
            .zip(reliability)
            .zip(tables.iter_mut())
            .map(|((&a, &r), t)| r * t.metric(metric, a)),
    )
}
