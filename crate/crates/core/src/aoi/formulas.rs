use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{Error, Result};

/// Largest threshold searched by [`optimize_adra`].
pub const ADRA_MAX_THRESHOLD: u32 = 60;

fn check_prob(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("access probability {p} outside (0, 1)")));
    }
    Ok(())
}

/// `(1 − p)^k`, in log space when `k` is large.
fn survive(p: f64, k: usize) -> f64 {
    if k > 50 {
        (k as f64 * (-p).ln_1p()).exp()
    } else {
        (1.0 - p).powi(k as i32)
    }
}

/// Mean AoI of slotted ALOHA with `n` loops and access probability `p`.
pub fn sa_mean_aoi(n: usize, p: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Domain(format!("slotted ALOHA mean AoI needs N >= 3, got {n}")));
    }
    check_prob(p)?;
    if n > 50 {
        return Ok((-(p.ln()) - (n - 1) as f64 * (-p).ln_1p()).exp());
    }
    Ok(1.0 / (p * survive(p, n - 1)))
}

/// Mean AoI of round-robin scheduling over `n` loops.
pub fn rr_mean_aoi(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("round robin needs at least one loop".into()));
    }
    Ok((n as f64 + 1.0) / 2.0)
}

/// Probability that an eligible ADRA node's transmission succeeds.
///
/// Nodes become ineligible for `δ − 1` slots after a delivery; the count of
/// eligible nodes is modeled as a Markov chain in which one eligible node
/// leaves per successful slot and each ineligible node re-enters with
/// per-slot probability `1/(δ − 1)`. The returned `q` is the stationary
/// probability that a transmitting eligible node meets no other transmitter.
pub fn solve_adra_q(n: usize, threshold: u32, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("ADRA needs at least one loop".into()));
    }
    check_prob(p)?;
    if n == 1 {
        return Ok(1.0);
    }
    if threshold <= 1 {
        return Ok(survive(p, n - 1));
    }

    let reentry = 1.0 / (threshold as f64 - 1.0);
    let states = n + 1;
    let mut trans = DMatrix::<f64>::zeros(states, states);
    for k in 0..=n {
        let idle = n - k;
        let success = if k == 0 { 0.0 } else { k as f64 * p * survive(p, k - 1) };
        let arrivals: Vec<f64> = if reentry >= 1.0 {
            (0..=idle).map(|j| if j == idle { 1.0 } else { 0.0 }).collect()
        } else {
            let dist = Binomial::new(reentry, idle as u64)
                .map_err(|e| Error::Optimization(format!("re-entry law: {e}")))?;
            (0..=idle).map(|j| dist.pmf(j as u64)).collect()
        };
        for (after, weight) in [(k.saturating_sub(1), success), (k, 1.0 - success)] {
            if weight == 0.0 {
                continue;
            }
            for (j, pj) in arrivals.iter().enumerate() {
                trans[(k, after + j)] += weight * pj;
            }
        }
    }

    // Stationary law: πᵀ(P − I) = 0 with Σπ = 1, the last balance equation
    // replaced by normalization.
    let mut sys = (trans - DMatrix::<f64>::identity(states, states)).transpose();
    sys.row_mut(states - 1).fill(1.0);
    let mut rhs = DVector::<f64>::zeros(states);
    rhs[states - 1] = 1.0;
    let pi = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Optimization(format!("singular eligible-count chain (N={n}, δ={threshold}, p={p})")))?;
    if pi.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::Optimization(format!(
            "eligible-count chain has no valid stationary law (N={n}, δ={threshold}, p={p})"
        )));
    }

    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..=n {
        let w = pi[k].max(0.0) * k as f64;
        num += w * survive(p, k - 1);
        den += w;
    }
    if !(den > 0.0) {
        return Err(Error::Optimization("no eligible nodes in stationary law".into()));
    }
    Ok((num / den).clamp(f64::MIN_POSITIVE, 1.0))
}

/// ADRA network-wide mean AoI for a given success probability `q`.
pub fn adra_mean_aoi_with_q(threshold: u32, p: f64, q: f64) -> f64 {
    let d = threshold as f64;
    let pq = p * q;
    d / 2.0 + 1.0 / pq - d / (2.0 * (d * pq + 1.0 - pq))
}

/// ADRA network-wide mean AoI, with `q` from [`solve_adra_q`].
pub fn adra_mean_aoi(n: usize, threshold: u32, p: f64) -> Result<f64> {
    let q = solve_adra_q(n, threshold, p)?;
    Ok(adra_mean_aoi_with_q(threshold, p, q))
}

/// Threshold, access probability, and the resulting success probability and
/// mean AoI of an ADRA configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdraParams {
    pub threshold: u32,
    pub p: f64,
    pub q: f64,
    pub mean_aoi: f64,
}

impl AdraParams {
    pub fn evaluate(n: usize, threshold: u32, p: f64) -> Result<Self> {
        let q = solve_adra_q(n, threshold, p)?;
        Ok(Self { threshold, p, q, mean_aoi: adra_mean_aoi_with_q(threshold, p, q) })
    }
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { x1 } else { x2 })
}

/// Minimizes [`adra_mean_aoi`] over integer `δ ∈ [0, 60]` and `p ∈ (0, 1)`.
///
/// For each `δ` a coarse scan over `p ∈ {0.01, …, 0.99}` brackets the
/// minimum, then golden-section search refines it. Ties go to the smaller
/// threshold.
pub fn optimize_adra(n: usize) -> Result<AdraParams> {
    if n < 3 {
        return Err(Error::Domain(format!("ADRA optimization needs N >= 3, got {n}")));
    }
    let mut best: Option<AdraParams> = None;
    for threshold in 0..=ADRA_MAX_THRESHOLD {
        let objective = |p: f64| adra_mean_aoi(n, threshold, p);
        let mut grid_best = (0.01, f64::INFINITY);
        for i in 1..=99 {
            let p = i as f64 / 100.0;
            let v = objective(p)?;
            if v < grid_best.1 {
                grid_best = (p, v);
            }
        }
        let lo = (grid_best.0 - 0.01).max(1e-4);
        let hi = (grid_best.0 + 0.01).min(1.0 - 1e-4);
        let p = golden_section(objective, lo, hi, 1e-7)?;
        let mut cand = AdraParams::evaluate(n, threshold, p)?;
        if cand.mean_aoi > grid_best.1 {
            cand = AdraParams::evaluate(n, threshold, grid_best.0)?;
        }
        if best.is_none_or(|b| cand.mean_aoi < b.mean_aoi) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Optimization("empty ADRA search space".into()))
}
