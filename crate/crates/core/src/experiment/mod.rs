//! Experiment drivers behind the `ncsim` binary: single runs, network-size
//! sweeps, closed-form validation and the inverted-pendulum case study.

mod output;
mod spec;

use std::fmt;

use crate::aoi::{adra_mean_aoi, rr_mean_aoi, sa_mean_aoi, ErrorMetric};
use crate::channel::ChannelMode;
use crate::control::SystemClass;
use crate::error::Result;
use crate::mac::{Protocol, SchedulerPolicy};
use crate::sim::{run_replications, run_replications_with, Replications, SimConfig};

pub use output::{emit_results, format_value, write_nmse_curves, write_pendulum, write_validation, NMSE_CURVE_MAX_AGE};
pub use spec::{default_spec, parse_config, parse_str, ExperimentSpec, Scenario, DEFAULT_PHI_LIMIT_DEG, PENDULUM_LOOPS};

/// Relative tolerance of simulated slotted-ALOHA and round-robin AoI
/// against the closed forms.
pub const SA_RR_TOLERANCE: f64 = 0.05;
/// Relative tolerance for ADRA, whose success probability is itself modeled.
pub const ADRA_TOLERANCE: f64 = 0.10;

/// Replications of one protocol at one network size.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub n: usize,
    pub policy: SchedulerPolicy,
    pub reps: Replications,
}

impl RunSet {
    pub fn label(&self) -> String {
        self.policy.label()
    }

    /// Replication mean of a summary metric, NaN if absent.
    pub fn mean(&self, metric: &str) -> f64 {
        self.reps.metric(metric).map_or(f64::NAN, |m| m.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub scenario: Scenario,
    pub classes: Vec<SystemClass>,
    /// Whether the channel matches the closed-form assumptions.
    pub ideal_channel: bool,
    pub sets: Vec<RunSet>,
}

impl ExperimentResults {
    pub fn find(&self, label: &str, n: usize) -> Option<&RunSet> {
        self.sets.iter().find(|s| s.label() == label && s.n == n)
    }
}

fn replicate(cfg: &SimConfig, jobs: Option<usize>) -> Result<Replications> {
    match jobs {
        Some(j) => run_replications_with(cfg, j),
        None => run_replications(cfg),
    }
}

/// Mean AoI predicted by the closed forms, where one exists.
pub fn theoretical_mean_aoi(policy: &SchedulerPolicy, n: usize) -> Option<f64> {
    match *policy {
        SchedulerPolicy::RoundRobin => rr_mean_aoi(n).ok(),
        SchedulerPolicy::SlottedAloha { p } => sa_mean_aoi(n, p).ok(),
        SchedulerPolicy::Adra { threshold, p } => adra_mean_aoi(n, threshold, p).ok(),
        _ => None,
    }
}

/// Runs every protocol at every network size of `spec`.
pub fn run_experiment(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<ExperimentResults> {
    let mut sets = Vec::with_capacity(spec.protocols.len() * spec.n_values.len());
    for &protocol in &spec.protocols {
        for &n in &spec.n_values {
            let policy = spec.policy(protocol, n)?;
            let reps = replicate(&spec.sim_config(n, policy)?, jobs)?;
            sets.push(RunSet { n, policy, reps });
        }
    }
    Ok(ExperimentResults {
        scenario: spec.scenario,
        classes: spec.classes.clone(),
        ideal_channel: spec.channel.mode == ChannelMode::StrictCollision && spec.channel.erasure_prob == 0.0,
        sets,
    })
}

/// One simulated-versus-closed-form comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub n: usize,
    pub policy: SchedulerPolicy,
    pub simulated: f64,
    pub half_width: Option<f64>,
    pub theory: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// For ADRA rows: whether ADRA beat simulated slotted ALOHA at the same N.
    pub beats_sa: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    /// Protocol and size pairs without a closed form (contention at N < 3).
    pub skipped: Vec<(Protocol, usize)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<34} {:>3} {:>10} {:>10} {:>9} {:>6}", "policy", "N", "simulated", "theory", "rel_err", "")?;
        for r in &self.rows {
            let mut verdict = if r.pass { "ok" } else { "FAIL" }.to_string();
            if let Some(b) = r.beats_sa {
                verdict.push_str(if b { " <SA" } else { " >=SA" });
            }
            writeln!(
                f,
                "{:<34} {:>3} {:>10.4} {:>10.4} {:>8.2}% {verdict}",
                r.policy.to_string(),
                r.n,
                r.simulated,
                r.theory,
                100.0 * r.rel_error
            )?;
        }
        for (p, n) in &self.skipped {
            writeln!(f, "{p} at N={n}: no closed form, skipped")?;
        }
        Ok(())
    }
}

/// Simulates the contention and round-robin protocols on an ideal slotted
/// channel and compares their mean AoI with the closed forms.
pub fn validate_theory(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<(ExperimentResults, ValidationReport)> {
    let mut sets = Vec::new();
    let mut skipped = Vec::new();
    for &protocol in &spec.protocols {
        for &n in &spec.n_values {
            if protocol != Protocol::RoundRobin && n < 3 {
                skipped.push((protocol, n));
                continue;
            }
            let policy = spec.policy(protocol, n)?;
            let reps = replicate(&spec.sim_config(n, policy)?, jobs)?;
            sets.push(RunSet { n, policy, reps });
        }
    }
    let mut rows = Vec::new();
    for set in &sets {
        let Some(theory) = theoretical_mean_aoi(&set.policy, set.n) else { continue };
        let aoi = set.reps.metric("mean_aoi").expect("mean_aoi is always summarized");
        let tolerance = match set.policy.protocol() {
            Protocol::Adra => ADRA_TOLERANCE,
            _ => SA_RR_TOLERANCE,
        };
        let rel_error = (aoi.mean - theory).abs() / theory;
        let beats_sa = (set.policy.protocol() == Protocol::Adra).then(|| {
            sets.iter()
                .find(|s| s.n == set.n && s.policy.protocol() == Protocol::SlottedAloha)
                .map(|sa| aoi.mean < sa.mean("mean_aoi"))
        });
        rows.push(ValidationRow {
            n: set.n,
            policy: set.policy,
            simulated: aoi.mean,
            half_width: aoi.half_width,
            theory,
            rel_error,
            tolerance,
            pass: rel_error <= tolerance,
            beats_sa: beats_sa.flatten(),
        });
    }
    let results = ExperimentResults { scenario: spec.scenario, classes: spec.classes.clone(), ideal_channel: true, sets };
    Ok((results, ValidationReport { rows, skipped }))
}

/// Per-step extremes of one pendulum loop's cart position and angle across
/// replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub loop_id: usize,
    pub phi_min_deg: Vec<f64>,
    pub phi_mean_deg: Vec<f64>,
    pub phi_max_deg: Vec<f64>,
    pub xi_min: Vec<f64>,
    pub xi_mean: Vec<f64>,
    pub xi_max: Vec<f64>,
}

/// Outcome for one pendulum loop under one protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumLoop {
    pub loop_id: usize,
    /// Largest |φ| in degrees over the evaluation window of all replications.
    pub peak_phi_deg: f64,
    /// Largest |ξ| in metres over the same window.
    pub peak_xi: f64,
    pub mean_aoi: f64,
    pub mean_nmse: f64,
    pub diverged: bool,
    pub stabilized: bool,
    /// The running mean of the loop's AoI never decreases across the
    /// evaluation window, in every replication.
    pub aoi_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumCase {
    pub policy: SchedulerPolicy,
    pub reps: Replications,
    pub loops: Vec<PendulumLoop>,
    pub envelopes: Vec<Envelope>,
}

impl PendulumCase {
    pub fn label(&self) -> String {
        self.policy.label()
    }

    pub fn all_stabilized(&self) -> bool {
        self.loops.iter().all(|l| l.stabilized)
    }

    pub fn peak_phi_deg(&self) -> f64 {
        self.loops.iter().map(|l| l.peak_phi_deg).fold(0.0, f64::max)
    }

    pub fn peak_xi(&self) -> f64 {
        self.loops.iter().map(|l| l.peak_xi).fold(0.0, f64::max)
    }

    /// True when every pendulum loop's AoI running mean grows monotonically.
    pub fn starves_pendulums(&self) -> bool {
        self.loops.iter().all(|l| l.aoi_monotone)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumReport {
    pub phi_limit_deg: f64,
    pub sampling_period: f64,
    pub cases: Vec<PendulumCase>,
}

impl PendulumReport {
    pub fn case(&self, label: &str) -> Option<&PendulumCase> {
        self.cases.iter().find(|c| c.label() == label)
    }
}

impl fmt::Display for PendulumReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>12} {:>10} {:>10} {:>10} {:>12}  stabilized (|phi| <= {} deg)",
            "protocol", "peak|phi|deg", "peak|xi|m", "IP aoi", "IP nmse", "lqg", self.phi_limit_deg
        )?;
        for c in &self.cases {
            let stable = c.loops.iter().filter(|l| l.stabilized).count();
            let aoi = c.loops.iter().map(|l| l.mean_aoi).sum::<f64>() / c.loops.len().max(1) as f64;
            let nmse = c.loops.iter().map(|l| l.mean_nmse).sum::<f64>() / c.loops.len().max(1) as f64;
            let lqg = c.reps.metric("lqg_cost").map_or(f64::NAN, |m| m.mean);
            writeln!(
                f,
                "{:<12} {:>12.3} {:>10.4} {:>10.3} {:>10.3} {:>12.4e}  {stable}/{}",
                c.label(),
                c.peak_phi_deg(),
                c.peak_xi(),
                aoi,
                nmse,
                lqg,
                c.loops.len()
            )?;
        }
        Ok(())
    }
}

/// Loop indices (zero-based) running the pendulum preset.
fn pendulum_loops(spec: &ExperimentSpec, n: usize) -> Vec<usize> {
    (0..n).filter(|i| spec.classes[i % spec.classes.len()] == SystemClass::Pendulum).collect()
}

fn running_mean_monotone(aoi: &[u64]) -> bool {
    let mut sum = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for (k, a) in aoi.iter().enumerate() {
        sum += *a as f64;
        let mean = sum / (k + 1) as f64;
        if mean < prev {
            return false;
        }
        prev = mean;
    }
    true
}

fn pendulum_case(
    spec: &ExperimentSpec,
    policy: SchedulerPolicy,
    jobs: Option<usize>,
) -> Result<PendulumCase> {
    let n = spec.n_values[0];
    let mut cfg = spec.sim_config(n, policy)?;
    cfg.trace_loops = pendulum_loops(spec, n);
    let window = cfg.window()?;
    let (lo, hi) = (window.start as usize, window.end as usize);
    let mut reps = replicate(&cfg, jobs)?;

    let steps = cfg.num_steps() as usize;
    let mut loops = Vec::new();
    let mut envelopes = Vec::new();
    for (t, &idx) in cfg.trace_loops.iter().enumerate() {
        let runs = reps.runs.len() as f64;
        let mut env = Envelope {
            loop_id: idx + 1,
            phi_min_deg: vec![f64::INFINITY; steps],
            phi_mean_deg: vec![0.0; steps],
            phi_max_deg: vec![f64::NEG_INFINITY; steps],
            xi_min: vec![f64::INFINITY; steps],
            xi_mean: vec![0.0; steps],
            xi_max: vec![f64::NEG_INFINITY; steps],
        };
        let (mut peak_phi, mut peak_xi) = (0.0f64, 0.0f64);
        let mut monotone = true;
        let mut diverged = false;
        let (mut aoi, mut nmse) = (0.0, 0.0);
        for run in &reps.runs {
            let trace = &run.traces[t];
            for (k, x) in trace.states.iter().enumerate().take(steps) {
                let (xi, phi) = (x[0], x[2].to_degrees());
                env.phi_min_deg[k] = env.phi_min_deg[k].min(phi);
                env.phi_max_deg[k] = env.phi_max_deg[k].max(phi);
                env.phi_mean_deg[k] += phi / runs;
                env.xi_min[k] = env.xi_min[k].min(xi);
                env.xi_max[k] = env.xi_max[k].max(xi);
                env.xi_mean[k] += xi / runs;
                if (lo..=hi).contains(&k) {
                    peak_phi = peak_phi.max(phi.abs());
                    peak_xi = peak_xi.max(xi.abs());
                }
            }
            monotone &= running_mean_monotone(&trace.aoi[lo..=hi.min(trace.aoi.len() - 1)]);
            let m = &run.metrics.loops[idx];
            diverged |= m.diverged;
            aoi += m.mean_aoi / runs;
            nmse += m.mean_nmse / runs;
        }
        let stabilized = !diverged && peak_phi.is_finite() && peak_phi <= spec.phi_limit_deg;
        loops.push(PendulumLoop {
            loop_id: idx + 1,
            peak_phi_deg: peak_phi,
            peak_xi,
            mean_aoi: aoi,
            mean_nmse: nmse,
            diverged,
            stabilized,
            aoi_monotone: monotone,
        });
        envelopes.push(env);
    }
    for run in &mut reps.runs {
        run.traces.clear();
    }
    Ok(PendulumCase { policy, reps, loops, envelopes })
}

/// Runs the mixed easy/pendulum/hard network under every protocol of
/// `spec`, plus the raw-MSE MEF ablation when enabled.
pub fn pendulum_case_study(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<PendulumReport> {
    let n = spec.n_values[0];
    let mut policies = spec.protocols.iter().map(|&p| spec.policy(p, n)).collect::<Result<Vec<_>>>()?;
    if spec.raw_mse_ablation {
        policies.push(SchedulerPolicy::Mef { frame_len: spec.frame_len, metric: ErrorMetric::Mse });
    }
    let cases = policies.into_iter().map(|p| pendulum_case(spec, p, jobs)).collect::<Result<Vec<_>>>()?;
    let sampling_period = spec.sim_config(n, SchedulerPolicy::RoundRobin)?.sampling_period;
    Ok(PendulumReport { phi_limit_deg: spec.phi_limit_deg, sampling_period, cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scenario: Scenario, doc: &str) -> ExperimentSpec {
        let mut spec = parse_str(doc, Some(scenario)).unwrap();
        spec.replications = 3;
        spec.duration_s = 12.0;
        spec.warmup_s = 1.0;
        spec.cooldown_s = 1.0;
        spec
    }

    #[test]
    fn sweep_produces_one_set_per_protocol_and_size() {
        let spec = quick(Scenario::Sweep, "protocols = [\"rr\", \"pmef\"]\nn_range = [2, 4]\n");
        let res = run_experiment(&spec, Some(2)).unwrap();
        assert_eq!(res.sets.len(), 6);
        assert!(res.find("pmef", 3).is_some());
        assert!(!res.ideal_channel);
    }

    #[test]
    fn round_robin_validation_is_exact() {
        let spec = quick(Scenario::ValidateTheory, "protocols = [\"rr\", \"sa\"]\nn_values = [2, 4]\n");
        let (_, report) = validate_theory(&spec, None).unwrap();
        assert_eq!(report.skipped, vec![(Protocol::SlottedAloha, 2)]);
        let rr: Vec<_> = report.rows.iter().filter(|r| r.policy == SchedulerPolicy::RoundRobin).collect();
        assert_eq!(rr.len(), 2);
        assert!(rr.iter().all(|r| r.rel_error < 1e-9 && r.pass));
    }

    #[test]
    fn running_mean_detects_resets() {
        assert!(running_mean_monotone(&[1, 2, 3, 4, 5]));
        assert!(running_mean_monotone(&[3, 3, 3]));
        assert!(!running_mean_monotone(&[1, 2, 3, 1]));
    }

    #[test]
    fn pendulum_case_reports_every_pendulum() {
        let mut spec = quick(Scenario::Pendulum, "protocols = [\"pmef\"]\nraw_mse_ablation = false\n");
        spec.replications = 2;
        let report = pendulum_case_study(&spec, None).unwrap();
        assert_eq!(report.cases.len(), 1);
        let case = &report.cases[0];
        assert_eq!(case.loops.iter().map(|l| l.loop_id).collect::<Vec<_>>(), vec![2, 5, 8, 11, 14]);
        assert!(case.reps.runs.iter().all(|r| r.traces.is_empty()));
        let env = &case.envelopes[0];
        assert_eq!(env.phi_min_deg.len(), 1200);
        assert!(env.phi_min_deg.iter().zip(&env.phi_max_deg).all(|(a, b)| a <= b));
    }
}
