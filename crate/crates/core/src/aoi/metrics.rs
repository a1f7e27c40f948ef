use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Age of the freshest update seen by one observer, in sampling periods.
///
/// The observer advances its own step with [`AoiTracker::tick`]; the age
/// is `step − ν` floored at one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AoiTracker {
    step: u64,
    last_gen: u64,
}

impl AoiTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&mut self) {
        self.step += 1;
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = self.step.max(step);
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn last_gen(&self) -> u64 {
        self.last_gen
    }

    pub fn age(&self) -> u64 {
        self.step.saturating_sub(self.last_gen).max(1)
    }

    /// Records an update generated at `gen_step`; returns whether it was
    /// strictly fresher than the last one.
    pub fn update(&mut self, gen_step: u64) -> bool {
        if gen_step > self.last_gen {
            self.last_gen = gen_step;
            true
        } else {
            false
        }
    }
}

/// Inclusive range of sampling steps that contribute to the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvalWindow {
    pub start: u64,
    pub end: u64,
}

impl EvalWindow {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start > end {
            return Err(Error::config(format!("empty evaluation window [{start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, step: u64) -> bool {
        (self.start..=self.end).contains(&step)
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Default)]
struct LoopAccum {
    label: String,
    aoi: f64,
    mse: f64,
    nmse: f64,
    lqg: f64,
    samples: u64,
    generated: u64,
    tx_total: u64,
    rx_total: u64,
    tx_window: u64,
    rx_window: u64,
    max_aoi: u64,
}

/// Windowed per-loop aggregates of AoI, estimation error, and control cost,
/// plus transmission and delivery counters.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    window: EvalWindow,
    loops: Vec<LoopAccum>,
}

/// Finalized metrics of one loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopMetrics {
    /// One-based loop id.
    pub loop_id: usize,
    pub class: String,
    pub mean_aoi: f64,
    pub max_aoi: u64,
    pub mean_mse: f64,
    pub mean_nmse: f64,
    pub lqg_cost: f64,
    /// Transmissions started inside the evaluation window.
    pub tx_count: u64,
    /// Fresh deliveries inside the evaluation window.
    pub rx_count: u64,
    pub tx_total: u64,
    pub rx_total: u64,
    pub samples_generated: u64,
    pub delivery_ratio: f64,
    pub diverged: bool,
}

/// Share of the network's fresh deliveries that went to one class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassShare {
    pub class: String,
    pub loops: usize,
    pub fraction: f64,
}

/// Network-wide averages over loops.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkMetrics {
    pub mean_aoi: f64,
    pub mean_mse: f64,
    pub mean_nmse: f64,
    pub lqg_cost: f64,
    pub delivery_ratio: f64,
    pub diverged_loops: usize,
    pub fractions: Vec<ClassShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub loops: Vec<LoopMetrics>,
    pub network: NetworkMetrics,
}

impl RunMetrics {
    /// Fraction of deliveries for `class`, zero if the class is absent.
    pub fn fraction(&self, class: &str) -> f64 {
        self.network
            .fractions
            .iter()
            .find(|s| s.class == class)
            .map_or(0.0, |s| s.fraction)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsAccumulator {
    /// `labels[i]` is the class label of loop `i` (zero-based).
    pub fn new(labels: Vec<String>, window: EvalWindow) -> Self {
        let loops = labels
            .into_iter()
            .map(|label| LoopAccum { label, ..Default::default() })
            .collect();
        Self { window, loops }
    }

    pub fn window(&self) -> EvalWindow {
        self.window
    }

    pub fn num_loops(&self) -> usize {
        self.loops.len()
    }

    pub fn record_step(&mut self, idx: usize, step: u64, aoi: u64, mse: f64, nmse: f64, cost: f64) {
        if !self.window.contains(step) {
            return;
        }
        let acc = &mut self.loops[idx];
        acc.aoi += aoi as f64;
        acc.mse += mse;
        acc.nmse += nmse;
        acc.lqg += cost;
        acc.samples += 1;
        acc.max_aoi = acc.max_aoi.max(aoi);
    }

    pub fn record_sample(&mut self, idx: usize) {
        self.loops[idx].generated += 1;
    }

    pub fn record_tx(&mut self, idx: usize, step: u64) {
        let acc = &mut self.loops[idx];
        acc.tx_total += 1;
        if self.window.contains(step) {
            acc.tx_window += 1;
        }
    }

    /// A fresh delivery attributed to `step`.
    pub fn record_rx(&mut self, idx: usize, step: u64) {
        let acc = &mut self.loops[idx];
        acc.rx_total += 1;
        if self.window.contains(step) {
            acc.rx_window += 1;
        }
    }

    pub fn finalize(&self, diverged: &[bool]) -> Result<RunMetrics> {
        if self.loops.is_empty() {
            return Err(Error::config("no loops to summarize"));
        }
        if diverged.len() != self.loops.len() {
            return Err(Error::dim(format!(
                "{} divergence flags for {} loops",
                diverged.len(),
                self.loops.len()
            )));
        }
        let expected = self.window.len();
        let mut loops = Vec::with_capacity(self.loops.len());
        for (i, acc) in self.loops.iter().enumerate() {
            if acc.samples != expected {
                return Err(Error::Invariant(format!(
                    "loop {} has {} samples in a window of {expected}",
                    i + 1,
                    acc.samples
                )));
            }
            let n = acc.samples as f64;
            loops.push(LoopMetrics {
                loop_id: i + 1,
                class: acc.label.clone(),
                mean_aoi: acc.aoi / n,
                max_aoi: acc.max_aoi,
                mean_mse: acc.mse / n,
                mean_nmse: acc.nmse / n,
                lqg_cost: acc.lqg / n,
                tx_count: acc.tx_window,
                rx_count: acc.rx_window,
                tx_total: acc.tx_total,
                rx_total: acc.rx_total,
                samples_generated: acc.generated,
                delivery_ratio: ratio(acc.rx_window, acc.tx_window),
                diverged: diverged[i],
            });
        }

        let count = loops.len() as f64;
        let mean = |f: fn(&LoopMetrics) -> f64| loops.iter().map(f).sum::<f64>() / count;
        let mut per_class: BTreeMap<&str, (usize, u64)> = BTreeMap::new();
        for l in &loops {
            let e = per_class.entry(l.class.as_str()).or_default();
            e.0 += 1;
            e.1 += l.rx_count;
        }
        let total_rx: u64 = loops.iter().map(|l| l.rx_count).sum();
        let total_tx: u64 = loops.iter().map(|l| l.tx_count).sum();
        let fractions = per_class
            .into_iter()
            .map(|(class, (n, rx))| ClassShare { class: class.to_string(), loops: n, fraction: ratio(rx, total_rx) })
            .collect();
        let network = NetworkMetrics {
            mean_aoi: mean(|l| l.mean_aoi),
            mean_mse: mean(|l| l.mean_mse),
            mean_nmse: mean(|l| l.mean_nmse),
            lqg_cost: mean(|l| l.lqg_cost),
            delivery_ratio: ratio(total_rx, total_tx),
            diverged_loops: loops.iter().filter(|l| l.diverged).count(),
            fractions,
        };
        Ok(RunMetrics { loops, network })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracker_ages_and_only_accepts_fresher() {
        let mut t = AoiTracker::new();
        assert_eq!(t.age(), 1);
        for _ in 0..10 {
            t.tick();
        }
        assert_eq!(t.age(), 10);
        assert!(t.update(7));
        assert_eq!(t.age(), 3);
        assert!(!t.update(7));
        assert!(!t.update(2));
        t.tick();
        t.tick();
        assert_eq!(t.age(), 5);
    }

    #[test]
    fn empty_window_rejected() {
        assert!(matches!(EvalWindow::new(10, 9), Err(Error::Config(_))));
        assert_eq!(EvalWindow::new(501, 2500).unwrap().len(), 2000);
    }

    #[test]
    fn constant_age_mean() {
        let w = EvalWindow::new(501, 2500).unwrap();
        let mut acc = MetricsAccumulator::new(vec!["easy".into(), "hard".into()], w);
        for step in 0..=3000 {
            for i in 0..2 {
                acc.record_step(i, step, 2, 2.0, 2.0, 1.0);
            }
        }
        let m = acc.finalize(&[false, false]).unwrap();
        assert_eq!(m.loops[0].mean_aoi, 2.0);
        assert_eq!(m.network.mean_aoi, 2.0);
        assert_eq!(m.loops[1].lqg_cost, 1.0);
    }

    #[test]
    fn class_fractions() {
        let w = EvalWindow::new(1, 1).unwrap();
        let mut acc = MetricsAccumulator::new(vec!["easy".into(), "hard".into(), "easy".into()], w);
        for i in 0..3 {
            acc.record_step(i, 1, 1, 1.0, 1.0, 0.0);
        }
        for _ in 0..200 {
            acc.record_rx(0, 1);
        }
        for _ in 0..100 {
            acc.record_rx(2, 1);
            acc.record_rx(1, 1);
        }
        acc.record_rx(1, 50);
        let m = acc.finalize(&[false; 3]).unwrap();
        assert_eq!(m.fraction("easy"), 0.75);
        assert_eq!(m.fraction("hard"), 0.25);
        assert_eq!(m.fraction("mid"), 0.0);
        assert_eq!(m.loops[1].rx_total, 101);
    }

    #[test]
    fn missing_samples_are_an_invariant_violation() {
        let w = EvalWindow::new(1, 3).unwrap();
        let mut acc = MetricsAccumulator::new(vec!["easy".into()], w);
        acc.record_step(0, 1, 1, 1.0, 1.0, 0.0);
        assert!(matches!(acc.finalize(&[false]), Err(Error::Invariant(_))));
    }
}
