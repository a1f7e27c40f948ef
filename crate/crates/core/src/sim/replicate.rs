use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::sim::config::SimConfig;
use crate::sim::engine::{run_with_seed, RunResult};

/// Confidence level of the reported intervals.
pub const CONFIDENCE: f64 = 0.99;

/// Mean of one metric over replications with its 99% Student-t half-width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// `None` with fewer than two replications.
    pub half_width: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width.unwrap_or(0.0)
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width.unwrap_or(0.0)
    }

    /// True if the two intervals are disjoint.
    pub fn separated_from(&self, other: &MetricSummary) -> bool {
        self.upper() < other.lower() || other.upper() < self.lower()
    }
}

/// Summarizes replication values. Any non-finite value makes the mean and
/// half-width infinite.
pub fn summarize(metric: impl Into<String>, values: &[f64]) -> MetricSummary {
    let n = values.len();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let metric = metric.into();
    if n == 0 {
        return MetricSummary { metric, mean: f64::NAN, half_width: None, min, max, n };
    }
    if values.iter().any(|v| !v.is_finite()) {
        let hw = (n >= 2).then_some(f64::INFINITY);
        return MetricSummary { metric, mean: f64::INFINITY, half_width: hw, min, max, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.5 + CONFIDENCE / 2.0);
        t * (var / n as f64).sqrt()
    });
    MetricSummary { metric, mean, half_width, min, max, n }
}

/// All replications of one configuration plus their summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replications {
    pub protocol: String,
    pub num_loops: usize,
    pub runs: Vec<RunResult>,
    pub summary: Vec<MetricSummary>,
}

impl Replications {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|m| m.metric == name)
    }

    fn build(cfg: &SimConfig, runs: Vec<RunResult>) -> Self {
        let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut push = |k: String, v: f64| series.entry(k).or_default().push(v);
        for r in &runs {
            let net = &r.metrics.network;
            push("mean_aoi".into(), net.mean_aoi);
            push("mean_mse".into(), net.mean_mse);
            push("mean_nmse".into(), net.mean_nmse);
            push("lqg_cost".into(), net.lqg_cost);
            push("delivery_ratio".into(), net.delivery_ratio);
            push("diverged_loops".into(), net.diverged_loops as f64);
            for share in &net.fractions {
                push(format!("fraction_{}", share.class), share.fraction);
            }
            let mut per_class: BTreeMap<&str, (f64, f64, f64, usize)> = BTreeMap::new();
            for l in &r.metrics.loops {
                let e = per_class.entry(l.class.as_str()).or_default();
                e.0 += l.mean_aoi;
                e.1 += l.mean_nmse;
                e.2 += l.lqg_cost;
                e.3 += 1;
            }
            for (class, (aoi, nmse, lqg, k)) in per_class {
                let k = k as f64;
                push(format!("aoi_{class}"), aoi / k);
                push(format!("nmse_{class}"), nmse / k);
                push(format!("lqg_{class}"), lqg / k);
            }
        }
        let summary = series.into_iter().map(|(k, v)| summarize(k, &v)).collect();
        Self { protocol: cfg.protocol.label(), num_loops: cfg.num_loops(), runs, summary }
    }
}

fn seeds(cfg: &SimConfig) -> Vec<u64> {
    (0..cfg.replications as u64)
        .map(|r| if cfg.fixed_seed { cfg.seed } else { cfg.seed.wrapping_add(r) })
        .collect()
}

/// Runs `cfg.replications` independent replications in parallel on the
/// global thread pool. Replication `r` uses seed `cfg.seed + r`.
pub fn run_replications(cfg: &SimConfig) -> Result<Replications> {
    cfg.validate()?;
    let runs = seeds(cfg)
        .into_par_iter()
        .map(|s| run_with_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Replications::build(cfg, runs))
}

/// As [`run_replications`], on a dedicated pool of `jobs` threads.
pub fn run_replications_with(cfg: &SimConfig, jobs: usize) -> Result<Replications> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| run_replications(cfg))
}
