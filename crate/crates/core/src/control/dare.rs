use nalgebra::DMatrix;

use crate::control::LtiSystem;
use crate::error::{Error, Result};
use crate::linalg;

/// Max-abs elementwise change between iterates at which the iteration stops.
pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITER: usize = 1_000_000;

/// Solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// Max-abs residual of the Riccati equation evaluated at `p`.
    pub residual: f64,
    pub iterations: usize,
}

/// Right-hand side of `P = Q + Aᵀ(P − PB(R + BᵀPB)⁻¹BᵀP)A`.
pub fn riccati_map(sys: &LtiSystem, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (sys.a(), sys.b());
    let pb = p * b;
    let inner = sys.r() + b.transpose() * &pb;
    let inv = linalg::inverse(&inner)?;
    Ok(sys.q() + a.transpose() * (p - &pb * inv * pb.transpose()) * a)
}

/// Max-abs residual of the Riccati equation at `p`.
pub fn riccati_residual(sys: &LtiSystem, p: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::max_abs(&(riccati_map(sys, p)? - p)))
}

/// `L* = (R + BᵀPB)⁻¹ BᵀPA`.
pub fn lqr_gain(sys: &LtiSystem, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (sys.a(), sys.b());
    let bt = b.transpose();
    let inv = linalg::inverse(&(sys.r() + &bt * p * b))?;
    Ok(inv * bt * p * a)
}

/// Fixed-point iteration of the Riccati map starting from `P₀ = Q`.
///
/// Stops when the max-abs change between iterates drops below `tol`. The
/// returned gain is checked for closed-loop stability.
pub fn solve_dare(sys: &LtiSystem, tol: f64, max_iter: usize) -> Result<DareSolution> {
    let fail = |reason: String| Error::Synthesis { system: sys.name().to_string(), reason };

    let mut p = sys.q().clone();
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(fail(format!("Riccati iteration did not converge in {max_iter} steps")));
        }
        let next = riccati_map(sys, &p).map_err(|e| fail(e.to_string()))?;
        // Keep the iterate symmetric; round-off asymmetry otherwise compounds.
        let next = (&next + next.transpose()) * 0.5;
        iterations += 1;
        let change = linalg::max_abs(&(&next - &p));
        p = next;
        if !change.is_finite() {
            return Err(fail("Riccati iteration diverged".into()));
        }
        if change < tol {
            break;
        }
    }
    let gain = lqr_gain(sys, &p).map_err(|e| fail(e.to_string()))?;
    let residual = riccati_residual(sys, &p).map_err(|e| fail(e.to_string()))?;
    let rho = linalg::spectral_radius(&(sys.a() - sys.b() * &gain));
    if rho >= 1.0 {
        return Err(fail(format!("closed loop is not stable (spectral radius {rho:.6})")));
    }
    Ok(DareSolution { p, gain, residual, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{make_preset, SystemClass};

    fn scalar(a: f64, b: f64, q: f64, r: f64) -> LtiSystem {
        let m = |v| DMatrix::from_element(1, 1, v);
        LtiSystem::new("s", m(a), m(b), m(1.0), m(q), m(r), 0.01).unwrap()
    }

    /// Positive root of `P = q + a²P − a²b²P²/(r + b²P)`, i.e.
    /// `b²P² − (q b² + a² r − r) P − q r = 0`.
    fn scalar_closed_form(a: f64, b: f64, q: f64, r: f64) -> f64 {
        let bq = q * b * b + a * a * r - r;
        (bq + (bq * bq + 4.0 * b * b * q * r).sqrt()) / (2.0 * b * b)
    }

    #[test]
    fn scalar_matches_quadratic_root() {
        for (a, q) in [(1.0, 100.0), (1.1, 100.0), (1.2, 100.0), (0.5, 3.0)] {
            let sys = scalar(a, 1.0, q, 1.0);
            let sol = solve_dare(&sys, 1e-12, DARE_MAX_ITER).unwrap();
            let expected = scalar_closed_form(a, 1.0, q, 1.0);
            assert!((sol.p[(0, 0)] - expected).abs() < 1e-9 * expected);
            assert!(sol.residual < 1e-8);
        }
    }

    #[test]
    fn integrator_gain_is_stabilizing() {
        let sol = solve_dare(&scalar(1.0, 1.0, 100.0, 1.0), DARE_TOL, DARE_MAX_ITER).unwrap();
        let l = sol.gain[(0, 0)];
        assert!((1.0 - l).abs() < 1.0);
        assert!(sol.residual < 1e-8);
    }

    #[test]
    fn zero_state_cost_on_stable_plant_gives_zero_gain() {
        let sys = scalar(0.6, 2.5, 0.0, 1.0);
        let sol = solve_dare(&sys, DARE_TOL, DARE_MAX_ITER).unwrap();
        assert_eq!(sol.p[(0, 0)], 0.0);
        assert_eq!(sol.gain[(0, 0)], 0.0);
    }

    #[test]
    fn unstable_uncontrollable_plant_fails() {
        // b = 0 on an unstable plant: iteration diverges or the loop stays unstable.
        let sys = scalar(1.5, 0.0, 1.0, 1.0);
        assert!(matches!(solve_dare(&sys, DARE_TOL, 10_000), Err(Error::Synthesis { .. })));
    }

    #[test]
    fn pendulum_gain_stabilizes() {
        let sys = make_preset(SystemClass::Pendulum).unwrap();
        let rho = linalg::spectral_radius(&sys.closed_loop());
        assert!(rho < 1.0, "rho = {rho}");
    }
}
