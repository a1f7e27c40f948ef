use std::collections::HashMap;
use std::sync::Arc;

use crate::aoi::EvalWindow;
use crate::channel::{secs_to_us, ChannelConfig};
use crate::control::{make_preset, LtiSystem, SystemClass, DEFAULT_SAMPLING_PERIOD};
use crate::error::{Error, Result};
use crate::mac::SchedulerPolicy;

/// Everything one simulation run needs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// One synthesized system per loop; loop ids are positions in this list.
    pub systems: Vec<Arc<LtiSystem>>,
    pub protocol: SchedulerPolicy,
    pub channel: ChannelConfig,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub cooldown_s: f64,
    pub sampling_period: f64,
    pub seed: u64,
    pub replications: usize,
    /// Give every replication the base seed instead of `seed + r`.
    pub fixed_seed: bool,
    /// Airtime of a poll; `None` means the data airtime.
    pub poll_duration_s: Option<f64>,
    /// Extra wait after an unanswered poll before the gateway moves on.
    pub poll_guard_s: f64,
    pub ack_duration_s: f64,
    pub ack_loss: f64,
    pub beacon_loss: f64,
    /// Sliding window of the WiFresh reliability estimate.
    pub reliability_window_s: f64,
    /// Zero-based loops whose state and age are recorded every step.
    pub trace_loops: Vec<usize>,
}

impl SimConfig {
    pub fn new(systems: Vec<Arc<LtiSystem>>, protocol: SchedulerPolicy) -> Self {
        Self {
            systems,
            protocol,
            channel: ChannelConfig::default(),
            duration_s: 30.0,
            warmup_s: 5.0,
            cooldown_s: 5.0,
            sampling_period: DEFAULT_SAMPLING_PERIOD,
            seed: 0,
            replications: 20,
            fixed_seed: false,
            poll_duration_s: None,
            poll_guard_s: 0.002,
            ack_duration_s: 0.0,
            ack_loss: 0.0,
            beacon_loss: 0.0,
            reliability_window_s: 0.5,
            trace_loops: Vec::new(),
        }
    }

    /// `n` loops whose classes cycle through `classes` by loop id.
    pub fn from_classes(classes: &[SystemClass], n: usize, protocol: SchedulerPolicy) -> Result<Self> {
        Ok(Self::new(class_systems(classes, n)?, protocol))
    }

    pub fn num_loops(&self) -> usize {
        self.systems.len()
    }

    pub fn sampling_us(&self) -> u64 {
        secs_to_us(self.sampling_period)
    }

    /// Number of sampling ticks per loop.
    pub fn num_steps(&self) -> u64 {
        (self.duration_s / self.sampling_period).round() as u64
    }

    pub fn window(&self) -> Result<EvalWindow> {
        let warm = (self.warmup_s / self.sampling_period).round() as u64;
        let cool = (self.cooldown_s / self.sampling_period).round() as u64;
        let steps = self.num_steps();
        if warm + cool >= steps {
            return Err(Error::config(format!(
                "duration {} s leaves no evaluation window after {} s warm-up and {} s cool-down",
                self.duration_s, self.warmup_s, self.cooldown_s
            )));
        }
        EvalWindow::new(warm + 1, steps - cool)
    }

    pub fn poll_us(&self) -> u64 {
        self.poll_duration_s.map_or(self.channel.tx_us(), secs_to_us)
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::config("at least one loop is required"));
        }
        if !(self.sampling_period > 0.0) || self.sampling_us() == 0 {
            return Err(Error::config("sampling period must be positive"));
        }
        for (i, sys) in self.systems.iter().enumerate() {
            if (sys.sampling_period() - self.sampling_period).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "loop {} samples every {} s, the run uses {} s",
                    i + 1,
                    sys.sampling_period(),
                    self.sampling_period
                )));
            }
            if !(sys.noise_cov().trace() > 0.0) {
                return Err(Error::config(format!(
                    "loop {} ({}): noise covariance has zero trace, nMSE is undefined",
                    i + 1,
                    sys.name()
                )));
            }
        }
        for (label, v) in [("duration_s", self.duration_s), ("warmup_s", self.warmup_s), ("cooldown_s", self.cooldown_s)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{label} must be a non-negative number")));
            }
        }
        if self.duration_s <= self.warmup_s + self.cooldown_s {
            return Err(Error::config("duration must exceed warm-up plus cool-down"));
        }
        self.window()?;
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        for (label, v) in [("ack_loss", self.ack_loss), ("beacon_loss", self.beacon_loss)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{label} {v} outside [0, 1)")));
            }
        }
        if self.ack_duration_s < 0.0 || self.poll_guard_s < 0.0 || self.poll_duration_s.is_some_and(|p| p <= 0.0) {
            return Err(Error::config("poll, guard, and ack durations must be non-negative (poll positive)"));
        }
        if !(self.reliability_window_s > 0.0) {
            return Err(Error::config("reliability window must be positive"));
        }
        if let Some(bad) = self.trace_loops.iter().find(|&&i| i >= self.systems.len()) {
            return Err(Error::config(format!("trace loop index {bad} out of range")));
        }
        self.channel.validate()?;
        self.protocol.validate()
    }
}

/// Synthesized presets for `n` loops, cycling `classes` by loop id.
pub fn class_systems(classes: &[SystemClass], n: usize) -> Result<Vec<Arc<LtiSystem>>> {
    if classes.is_empty() {
        return Err(Error::config("class list is empty"));
    }
    let mut cache: HashMap<SystemClass, Arc<LtiSystem>> = HashMap::new();
    (0..n)
        .map(|i| {
            let class = classes[i % classes.len()];
            if let Some(sys) = cache.get(&class) {
                return Ok(Arc::clone(sys));
            }
            let sys = Arc::new(make_preset(class)?);
            cache.insert(class, Arc::clone(&sys));
            Ok(sys)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> SimConfig {
        SimConfig::from_classes(&[SystemClass::Easy, SystemClass::Mid, SystemClass::Hard], n, SchedulerPolicy::RoundRobin)
            .unwrap()
    }

    #[test]
    fn default_window_is_two_thousand_steps() {
        let c = cfg(3);
        assert_eq!(c.num_steps(), 3000);
        let w = c.window().unwrap();
        assert_eq!((w.start, w.end, w.len()), (501, 2500, 2000));
        c.validate().unwrap();
    }

    #[test]
    fn classes_cycle_over_loop_ids() {
        let c = cfg(15);
        assert_eq!(c.systems[3].name(), "easy");
        assert_eq!(c.systems[4].name(), "mid");
        assert_eq!(c.systems[14].name(), "hard");
    }

    #[test]
    fn rejects_bad_horizons() {
        let mut c = cfg(2);
        c.duration_s = 10.0;
        assert!(c.validate().is_err());
        let mut c = cfg(2);
        c.systems.clear();
        assert!(c.validate().is_err());
        let mut c = cfg(2);
        c.beacon_loss = 1.0;
        assert!(c.validate().is_err());
    }
}
