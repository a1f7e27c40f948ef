use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::LtiSystem;
use crate::error::{Error, Result};

static OVERFLOWS: AtomicU64 = AtomicU64::new(0);

/// Number of MSE evaluations that overflowed to `+inf` in this process.
pub fn mse_overflow_count() -> u64 {
    OVERFLOWS.load(Ordering::Relaxed)
}

fn note_overflow() {
    OVERFLOWS.fetch_add(1, Ordering::Relaxed);
}

/// `tr(A^d Σ (A^d)ᵀ)`, which equals `tr((Aᵀ)^d A^d Σ)`.
fn trace_term(a_pow: &DMatrix<f64>, noise_cov: &DMatrix<f64>) -> f64 {
    // Σ is diagonal: tr(M Σ Mᵀ) = Σ_j Σ_jj ‖M[:, j]‖².
    a_pow
        .column_iter()
        .zip(noise_cov.diagonal().iter())
        .map(|(col, s)| if *s == 0.0 { 0.0 } else { s * col.norm_squared() })
        .sum()
}

/// Expected squared estimation error at age `age`:
/// `Σ_{d=1..Δ} tr((Aᵀ)^{d−1} A^{d−1} Σ)`. Zero at `Δ = 0`; `+inf` once the
/// sum overflows.
pub fn mse_of_age(sys: &LtiSystem, age: u64) -> f64 {
    let n = sys.state_dim();
    let mut a_pow = DMatrix::<f64>::identity(n, n);
    let mut sum = 0.0;
    for _ in 0..age {
        let term = trace_term(&a_pow, sys.noise_cov());
        sum += term;
        if !sum.is_finite() {
            note_overflow();
            return f64::INFINITY;
        }
        a_pow = sys.a() * a_pow;
    }
    sum
}

/// MSE divided by its value at `Δ = 1` (the trace of `Σ`).
pub fn nmse_of_age(sys: &LtiSystem, age: u64) -> Result<f64> {
    let norm = sys.noise_cov().trace();
    if !(norm > 0.0) {
        return Err(Error::config(format!(
            "{}: noise covariance has zero trace, nMSE is undefined",
            sys.name()
        )));
    }
    Ok(mse_of_age(sys, age) / norm)
}

/// Covariance of the estimation error at age `age`:
/// `Σ_{d=1..Δ} A^{d−1} Σ (A^{d−1})ᵀ`.
pub fn error_covariance(sys: &LtiSystem, age: u64) -> Result<DMatrix<f64>> {
    if age == 0 {
        return Err(Error::Domain("error covariance needs age >= 1".into()));
    }
    let n = sys.state_dim();
    let mut a_pow = DMatrix::<f64>::identity(n, n);
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for _ in 0..age {
        cov += &a_pow * sys.noise_cov() * a_pow.transpose();
        a_pow = sys.a() * a_pow;
    }
    if cov.iter().any(|v| !v.is_finite()) {
        note_overflow();
        cov.iter_mut().for_each(|v| {
            if !v.is_finite() {
                *v = f64::INFINITY
            }
        });
    }
    Ok(cov)
}

/// Which estimation-error figure a control-aware scheduler ranks loops by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// MSE normalized by its value at age 1.
    #[default]
    #[serde(alias = "normalized")]
    Nmse,
    /// Raw MSE, in the plant's own units.
    #[serde(alias = "raw")]
    Mse,
}

/// Memoized `mse_of_age` for one system, extended on demand.
#[derive(Debug, Clone)]
pub struct MseTable {
    a: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    a_pow: DMatrix<f64>,
    values: Vec<f64>,
    norm: f64,
}

impl MseTable {
    pub fn new(sys: &LtiSystem) -> Self {
        let n = sys.state_dim();
        Self {
            a: sys.a().clone(),
            noise_cov: sys.noise_cov().clone(),
            a_pow: DMatrix::identity(n, n),
            values: vec![0.0],
            norm: sys.noise_cov().trace(),
        }
    }

    pub fn mse(&mut self, age: u64) -> f64 {
        let age = age as usize;
        while self.values.len() <= age {
            let last = *self.values.last().expect("table starts with Δ = 0");
            if last.is_infinite() {
                self.values.push(f64::INFINITY);
                continue;
            }
            let next = last + trace_term(&self.a_pow, &self.noise_cov);
            if next.is_finite() {
                self.values.push(next);
                self.a_pow = &self.a * &self.a_pow;
            } else {
                note_overflow();
                self.values.push(f64::INFINITY);
            }
        }
        self.values[age]
    }

    /// Normalized MSE; zero-trace noise yields `NaN`, which callers validate
    /// up front with [`MseTable::normalizable`].
    pub fn nmse(&mut self, age: u64) -> f64 {
        self.mse(age) / self.norm
    }

    pub fn normalizable(&self) -> bool {
        self.norm > 0.0
    }

    pub fn metric(&mut self, metric: ErrorMetric, age: u64) -> f64 {
        match metric {
            ErrorMetric::Nmse => self.nmse(age),
            ErrorMetric::Mse => self.mse(age),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{make_preset, SystemClass};

    #[test]
    fn integrator_mse_is_age() {
        let sys = make_preset(SystemClass::Easy).unwrap();
        for k in 0..20 {
            assert_eq!(mse_of_age(&sys, k), k as f64);
        }
    }

    #[test]
    fn hard_class_at_three() {
        let sys = make_preset(SystemClass::Hard).unwrap();
        assert!((mse_of_age(&sys, 3) - 4.5136).abs() < 1e-12);
    }

    #[test]
    fn pendulum_at_one_is_noise_trace() {
        let ip = make_preset(SystemClass::Pendulum).unwrap();
        let expected = 6.4e-7 + 4.9e-7 + 2.742e-5 + 4.874e-5;
        assert!((mse_of_age(&ip, 1) - expected).abs() < 1e-18);
        assert!((expected - 7.729e-5).abs() < 1e-15);
    }

    #[test]
    fn nmse_at_one_is_exactly_one() {
        for class in SystemClass::ALL {
            let sys = make_preset(class).unwrap();
            assert_eq!(nmse_of_age(&sys, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn zero_noise_nmse_is_config_error() {
        let z = DMatrix::from_element(1, 1, 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = LtiSystem::new("quiet", one.clone(), one.clone(), z, one.clone(), one, 0.01).unwrap();
        assert!(matches!(nmse_of_age(&sys, 3), Err(Error::Config(_))));
        assert!(!MseTable::new(&sys).normalizable());
    }

    #[test]
    fn covariance_examples() {
        let hard = make_preset(SystemClass::Hard).unwrap();
        assert_eq!(error_covariance(&hard, 1).unwrap(), *hard.noise_cov());
        assert!((error_covariance(&hard, 2).unwrap()[(0, 0)] - 2.44).abs() < 1e-12);
        assert!(error_covariance(&hard, 0).is_err());
    }

    #[test]
    fn table_matches_direct_sum_and_saturates() {
        let hard = make_preset(SystemClass::Hard).unwrap();
        let mut table = MseTable::new(&hard);
        for k in [0, 1, 5, 17, 40, 3] {
            let direct = mse_of_age(&hard, k);
            assert!((table.mse(k) - direct).abs() <= 1e-12 * direct.max(1.0));
        }
        assert!(table.mse(5000).is_infinite());
        assert!(mse_of_age(&hard, 5000).is_infinite());
        assert!(mse_overflow_count() > 0);
    }

    #[test]
    fn nmse_curve_ordering_at_eight() {
        let at8 = |c| nmse_of_age(&make_preset(c).unwrap(), 8).unwrap();
        let (easy, ip, hard) = (at8(SystemClass::Easy), at8(SystemClass::Pendulum), at8(SystemClass::Hard));
        assert!(easy < ip && ip < hard, "{easy} {ip} {hard}");
    }
}
