use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aoi::{optimize_adra, ErrorMetric};
use crate::channel::{ChannelConfig, ChannelMode};
use crate::control::SystemClass;
use crate::error::{Error, Result};
use crate::mac::{Protocol, SchedulerPolicy, DEFAULT_FRAME_LEN};
use crate::sim::SimConfig;

/// Which experiment a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Single,
    Sweep,
    ValidateTheory,
    Pendulum,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Single => "single",
            Scenario::Sweep => "sweep",
            Scenario::ValidateTheory => "validate_theory",
            Scenario::Pendulum => "pendulum",
        }
    }
}

/// Number of loops in the pendulum case study.
pub const PENDULUM_LOOPS: usize = 15;
/// Envelope bound on |φ| below which a pendulum counts as stabilized.
pub const DEFAULT_PHI_LIMIT_DEG: f64 = 10.0;

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub protocols: Vec<Protocol>,
    /// Network sizes to run, ascending.
    pub n_values: Vec<usize>,
    /// Classes cycled over loop ids.
    pub classes: Vec<SystemClass>,
    pub seed: u64,
    pub replications: usize,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub cooldown_s: f64,
    /// Access probability for slotted ALOHA and ADRA; defaults depend on N.
    pub p: Option<f64>,
    /// ADRA age threshold; defaults to the optimizer's choice.
    pub threshold: Option<u32>,
    pub metric: ErrorMetric,
    pub frame_len: usize,
    pub channel: ChannelConfig,
    pub beacon_loss: f64,
    pub ack_loss: f64,
    pub ack_duration_s: f64,
    pub poll_duration_s: Option<f64>,
    pub poll_guard_s: f64,
    pub reliability_window_s: f64,
    pub phi_limit_deg: f64,
    /// Add a raw-MSE MEF run to the pendulum study.
    pub raw_mse_ablation: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    scenario: Option<Scenario>,
    protocol: Option<Protocol>,
    protocols: Option<Vec<Protocol>>,
    #[serde(alias = "N")]
    n: Option<usize>,
    n_range: Option<[usize; 2]>,
    n_values: Option<Vec<usize>>,
    classes: Option<Vec<SystemClass>>,
    seed: Option<u64>,
    replications: Option<usize>,
    duration_s: Option<f64>,
    warmup_s: Option<f64>,
    cooldown_s: Option<f64>,
    p: Option<f64>,
    threshold: Option<u32>,
    metric: Option<ErrorMetric>,
    frame_len: Option<usize>,
    channel: Option<ChannelConfig>,
    beacon_loss: Option<f64>,
    ack_loss: Option<f64>,
    ack_duration_s: Option<f64>,
    poll_duration_s: Option<f64>,
    poll_guard_s: Option<f64>,
    reliability_window_s: Option<f64>,
    phi_limit_deg: Option<f64>,
    raw_mse_ablation: Option<bool>,
    out: Option<PathBuf>,
}

/// Reads and validates a TOML experiment file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text, None).map_err(|e| match e {
        Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses a TOML experiment document. `scenario` overrides or supplies the
/// scenario key; a conflicting key in the document is an error.
pub fn parse_str(text: &str, scenario: Option<Scenario>) -> Result<ExperimentSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    build(raw, scenario)
}

/// The spec an empty document yields for `scenario`.
pub fn default_spec(scenario: Scenario) -> ExperimentSpec {
    build(RawSpec::default(), Some(scenario)).expect("defaults are valid")
}

fn build(raw: RawSpec, requested: Option<Scenario>) -> Result<ExperimentSpec> {
    let scenario = match (raw.scenario, requested) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::config(format!(
                "file declares scenario `{}` but `{}` was requested",
                a.as_str(),
                b.as_str()
            )))
        }
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(Error::config("missing key `scenario`")),
    };

    let protocols = match (raw.protocol, raw.protocols) {
        (Some(_), Some(_)) => return Err(Error::config("give either `protocol` or `protocols`, not both")),
        (Some(p), None) => vec![p],
        (None, Some(list)) => list,
        (None, None) => match scenario {
            Scenario::ValidateTheory => vec![Protocol::SlottedAloha, Protocol::Adra, Protocol::RoundRobin],
            _ => vec![Protocol::RoundRobin, Protocol::Mef, Protocol::Wifresh, Protocol::Pmef],
        },
    };
    if protocols.is_empty() {
        return Err(Error::config("protocol list is empty"));
    }

    let given = [raw.n.is_some(), raw.n_range.is_some(), raw.n_values.is_some()];
    if given.iter().filter(|g| **g).count() > 1 {
        return Err(Error::config("give at most one of `n`, `n_range`, `n_values`"));
    }
    let mut n_values = if let Some(n) = raw.n {
        vec![n]
    } else if let Some([lo, hi]) = raw.n_range {
        if lo > hi {
            return Err(Error::config(format!("n_range [{lo}, {hi}] is empty")));
        }
        (lo..=hi).collect()
    } else if let Some(list) = raw.n_values {
        list
    } else {
        match scenario {
            Scenario::Single | Scenario::Pendulum => vec![PENDULUM_LOOPS],
            Scenario::Sweep | Scenario::ValidateTheory => (2..=15).collect(),
        }
    };
    n_values.sort_unstable();
    n_values.dedup();
    if n_values.is_empty() {
        return Err(Error::config("network size list is empty"));
    }
    if n_values[0] == 0 {
        return Err(Error::config("network size must be at least 1"));
    }

    let classes = match (scenario, raw.classes) {
        (Scenario::Pendulum, Some(_)) => {
            return Err(Error::config("the pendulum study fixes the classes to easy, pendulum, hard"))
        }
        (Scenario::Pendulum, None) => vec![SystemClass::Easy, SystemClass::Pendulum, SystemClass::Hard],
        (_, Some(c)) => c,
        (_, None) => vec![SystemClass::Easy, SystemClass::Mid, SystemClass::Hard],
    };
    if classes.is_empty() {
        return Err(Error::config("class list is empty"));
    }

    if let Some(p) = raw.p {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::config(format!("p = {p} outside (0, 1]")));
        }
    }
    let frame_len = raw.frame_len.unwrap_or(DEFAULT_FRAME_LEN);
    if frame_len == 0 {
        return Err(Error::config("frame_len must be at least 1"));
    }

    let channel = match (scenario, raw.channel) {
        (Scenario::ValidateTheory, None) => ChannelConfig::ideal(),
        (Scenario::ValidateTheory, Some(ch)) => {
            if ch.mode != ChannelMode::StrictCollision {
                return Err(Error::config(
                    "theory validation needs channel.mode = \"strict_collision\"; the closed forms assume plain collision slots",
                ));
            }
            if ch.erasure_prob != 0.0 {
                return Err(Error::config("theory validation needs channel.erasure_prob = 0"));
            }
            ch
        }
        (_, ch) => ch.unwrap_or_default(),
    };
    channel.validate()?;

    let spec = ExperimentSpec {
        scenario,
        protocols,
        n_values,
        classes,
        seed: raw.seed.unwrap_or(0),
        replications: raw.replications.unwrap_or(20),
        duration_s: raw.duration_s.unwrap_or(30.0),
        warmup_s: raw.warmup_s.unwrap_or(5.0),
        cooldown_s: raw.cooldown_s.unwrap_or(5.0),
        p: raw.p,
        threshold: raw.threshold,
        metric: raw.metric.unwrap_or_default(),
        frame_len,
        channel,
        beacon_loss: raw.beacon_loss.unwrap_or(0.0),
        ack_loss: raw.ack_loss.unwrap_or(0.0),
        ack_duration_s: raw.ack_duration_s.unwrap_or(0.0),
        poll_duration_s: raw.poll_duration_s,
        poll_guard_s: raw.poll_guard_s.unwrap_or(0.002),
        reliability_window_s: raw.reliability_window_s.unwrap_or(0.5),
        phi_limit_deg: raw.phi_limit_deg.unwrap_or(DEFAULT_PHI_LIMIT_DEG),
        raw_mse_ablation: raw.raw_mse_ablation.unwrap_or(true),
        out: raw.out,
    };
    spec.validate()?;
    Ok(spec)
}

impl ExperimentSpec {
    /// Checks scenario preconditions and that every run config is valid.
    pub fn validate(&self) -> Result<()> {
        match self.scenario {
            Scenario::ValidateTheory => {
                if let Some(p) = self.protocols.iter().find(|p| {
                    !matches!(p, Protocol::SlottedAloha | Protocol::Adra | Protocol::RoundRobin)
                }) {
                    return Err(Error::config(format!(
                        "theory validation covers slotted_aloha, adra and round_robin, not {p}"
                    )));
                }
            }
            Scenario::Pendulum => {
                if self.n_values != [PENDULUM_LOOPS] {
                    return Err(Error::config(format!("the pendulum study runs N = {PENDULUM_LOOPS} loops")));
                }
            }
            Scenario::Single if self.n_values.len() != 1 => {
                return Err(Error::config("a single run takes one network size; use the sweep scenario"));
            }
            _ => {}
        }
        if !(self.phi_limit_deg > 0.0) {
            return Err(Error::config("phi_limit_deg must be positive"));
        }
        // Build one config to surface horizon, loss and channel errors early.
        let n = self.n_values[0];
        let policy = match self.protocols[0] {
            Protocol::Adra | Protocol::SlottedAloha => SchedulerPolicy::SlottedAloha { p: self.p.unwrap_or(0.5) },
            _ => SchedulerPolicy::RoundRobin,
        };
        self.sim_config(n, policy)?.validate()
    }

    /// Parameterizes `protocol` for an `n`-loop network. Slotted ALOHA
    /// defaults to `p = 1/N`; ADRA fills missing parameters from
    /// [`optimize_adra`].
    pub fn policy(&self, protocol: Protocol, n: usize) -> Result<SchedulerPolicy> {
        Ok(match protocol {
            Protocol::Aloha => SchedulerPolicy::Aloha,
            Protocol::SlottedAloha => SchedulerPolicy::SlottedAloha { p: self.p.unwrap_or(1.0 / n as f64) },
            Protocol::Adra => match (self.threshold, self.p) {
                (Some(threshold), Some(p)) => SchedulerPolicy::Adra { threshold, p },
                (threshold, p) => {
                    let opt = optimize_adra(n)?;
                    SchedulerPolicy::Adra { threshold: threshold.unwrap_or(opt.threshold), p: p.unwrap_or(opt.p) }
                }
            },
            Protocol::RoundRobin => SchedulerPolicy::RoundRobin,
            Protocol::Mef => SchedulerPolicy::Mef { frame_len: self.frame_len, metric: self.metric },
            Protocol::Wifresh => SchedulerPolicy::Wifresh,
            Protocol::Pmef => SchedulerPolicy::Pmef { metric: self.metric },
        })
    }

    /// Engine configuration for `n` loops under `policy`.
    pub fn sim_config(&self, n: usize, policy: SchedulerPolicy) -> Result<SimConfig> {
        let mut cfg = SimConfig::from_classes(&self.classes, n, policy)?;
        cfg.channel = self.channel.clone();
        cfg.duration_s = self.duration_s;
        cfg.warmup_s = self.warmup_s;
        cfg.cooldown_s = self.cooldown_s;
        cfg.seed = self.seed;
        cfg.replications = self.replications;
        cfg.beacon_loss = self.beacon_loss;
        cfg.ack_loss = self.ack_loss;
        cfg.ack_duration_s = self.ack_duration_s;
        cfg.poll_duration_s = self.poll_duration_s;
        cfg.poll_guard_s = self.poll_guard_s;
        cfg.reliability_window_s = self.reliability_window_s;
        Ok(cfg)
    }
}
