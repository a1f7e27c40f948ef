use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::dare::{solve_dare, DareSolution, DARE_MAX_ITER, DARE_TOL};
use crate::error::{Error, Result};
use crate::linalg;

/// Sampling period shared by every shipped preset, in seconds.
pub const DEFAULT_SAMPLING_PERIOD: f64 = 0.010;

/// Discrete-time LTI plant together with its LQR design weights and gain.
///
/// Matrices are per sampling period. The feedback gain starts at zero and is
/// filled in by [`LtiSystem::synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    name: String,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    sampling_period: f64,
    gain: DMatrix<f64>,
    noise_std: DVector<f64>,
}

impl LtiSystem {
    pub fn new(
        name: impl Into<String>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        noise_cov: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sampling_period: f64,
    ) -> Result<Self> {
        let name = name.into();
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::dim(format!("{name}: empty state or input dimension")));
        }
        if !a.is_square() {
            return Err(Error::dim(format!("{name}: A must be square")));
        }
        if b.nrows() != n {
            return Err(Error::dim(format!("{name}: B has {} rows, expected {n}", b.nrows())));
        }
        for (label, mat) in [("noise covariance", &noise_cov), ("Q", &q)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::dim(format!("{name}: {label} must be {n}x{n}")));
            }
        }
        if r.nrows() != m || r.ncols() != m {
            return Err(Error::dim(format!("{name}: R must be {m}x{m}")));
        }
        if !(sampling_period > 0.0 && sampling_period.is_finite()) {
            return Err(Error::config(format!("{name}: sampling period must be positive")));
        }
        if !linalg::is_diagonal(&noise_cov) || noise_cov.diagonal().iter().any(|v| *v < 0.0) {
            return Err(Error::config(format!(
                "{name}: noise covariance must be diagonal with non-negative entries"
            )));
        }
        if !linalg::is_symmetric(&q, 1e-12) || q.symmetric_eigenvalues().iter().any(|v| *v < -1e-12)
        {
            return Err(Error::config(format!("{name}: Q must be symmetric positive semi-definite")));
        }
        if !linalg::is_symmetric(&r, 1e-12) || r.clone().cholesky().is_none() {
            return Err(Error::config(format!("{name}: R must be symmetric positive definite")));
        }
        let noise_std = noise_cov.diagonal().map(f64::sqrt);
        Ok(Self {
            name,
            gain: DMatrix::zeros(m, n),
            a,
            b,
            noise_cov,
            q,
            r,
            sampling_period,
            noise_std,
        })
    }

    /// Solves the DARE with the default tolerance and stores the resulting gain.
    pub fn synthesize(&mut self) -> Result<DareSolution> {
        let sol = solve_dare(self, DARE_TOL, DARE_MAX_ITER)?;
        self.gain = sol.gain.clone();
        Ok(sol)
    }

    pub fn synthesized(mut self) -> Result<Self> {
        self.synthesize()?;
        Ok(self)
    }

    /// Replaces the feedback gain, e.g. with a hand-picked scalar.
    pub fn with_gain(mut self, gain: DMatrix<f64>) -> Result<Self> {
        if gain.nrows() != self.input_dim() || gain.ncols() != self.state_dim() {
            return Err(Error::dim(format!(
                "{}: gain must be {}x{}",
                self.name,
                self.input_dim(),
                self.state_dim()
            )));
        }
        self.gain = gain;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }
    /// Per-component noise standard deviation (square root of the diagonal).
    pub fn noise_std(&self) -> &DVector<f64> {
        &self.noise_std
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn sampling_period(&self) -> f64 {
        self.sampling_period
    }
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `A - B L*`.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.a - &self.b * &self.gain
    }

    /// Scalar system with `B = Σ = 1`, `Q = 100`, `R = 1`.
    pub fn scalar(name: impl Into<String>, a: f64) -> Result<Self> {
        let one = DMatrix::from_element(1, 1, 1.0);
        Self::new(
            name,
            DMatrix::from_element(1, 1, a),
            one.clone(),
            one.clone(),
            DMatrix::from_element(1, 1, 100.0),
            one,
            DEFAULT_SAMPLING_PERIOD,
        )
    }
}

/// The plant classes shipped with the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemClass {
    Easy,
    Mid,
    Hard,
    #[serde(alias = "ip")]
    Pendulum,
}

impl SystemClass {
    pub const ALL: [SystemClass; 4] =
        [SystemClass::Easy, SystemClass::Mid, SystemClass::Hard, SystemClass::Pendulum];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemClass::Easy => "easy",
            SystemClass::Mid => "mid",
            SystemClass::Hard => "hard",
            SystemClass::Pendulum => "pendulum",
        }
    }
}

impl fmt::Display for SystemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(SystemClass::Easy),
            "mid" => Ok(SystemClass::Mid),
            "hard" => Ok(SystemClass::Hard),
            "pendulum" | "ip" => Ok(SystemClass::Pendulum),
            other => Err(Error::config(format!("unknown system class `{other}`"))),
        }
    }
}

/// Builds a preset plant with its LQR gain already synthesized.
pub fn make_preset(class: SystemClass) -> Result<LtiSystem> {
    let sys = match class {
        SystemClass::Easy => LtiSystem::scalar("easy", 1.0)?,
        SystemClass::Mid => LtiSystem::scalar("mid", 1.1)?,
        SystemClass::Hard => LtiSystem::scalar("hard", 1.2)?,
        SystemClass::Pendulum => pendulum_system()?,
    };
    sys.synthesized()
}

/// Inverted pendulum on a cart sampled at 100 Hz; state `[ξ, ξ̇, φ, φ̇]`.
#[rustfmt::skip]
pub fn pendulum_system() -> Result<LtiSystem> {
    let a = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.01,    0.0001, 0.0,
        0.0, 0.9983,  0.0191, 0.0001,
        0.0, 0.0,     1.0017, 0.01,
        0.0, -0.0049, 0.3351, 1.0017,
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[0.0001, 0.0182, 0.0002, 0.0454]);
    let noise = DMatrix::from_diagonal(&DVector::from_vec(vec![6.4e-7, 4.9e-7, 2.742e-5, 4.874e-5]));
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![5000.0, 0.0, 100.0, 0.0]));
    let r = DMatrix::from_element(1, 1, 1.0);
    LtiSystem::new("pendulum", a, b, noise, q, r, DEFAULT_SAMPLING_PERIOD)
}

/// Physical parameters of the cart-pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Cart mass, kg.
    pub cart_mass: f64,
    /// Pendulum mass, kg.
    pub pend_mass: f64,
    /// Cart friction coefficient, N/m/s.
    pub friction: f64,
    /// Distance to the pendulum's centre of mass, m.
    pub length: f64,
    /// Pendulum moment of inertia, kg m².
    pub inertia: f64,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            cart_mass: 0.5,
            pend_mass: 0.2,
            friction: 0.1,
            length: 0.3,
            inertia: 0.006,
            gravity: 9.81,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("cart_mass", self.cart_mass),
            ("pend_mass", self.pend_mass),
            ("friction", self.friction),
            ("length", self.length),
            ("inertia", self.inertia),
            ("gravity", self.gravity),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("pendulum parameter {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Continuous-time model linearized about the upright equilibrium.
    ///
    /// Eliminates the coupled accelerations from
    /// `(I + m l²) φ̈ − m g l φ = m l ξ̈` and `(M + m) ξ̈ + b ξ̇ − m l φ̈ = u`.
    pub fn continuous_model(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.validate()?;
        let Self {
            cart_mass: big_m,
            pend_mass: m,
            friction: b,
            length: l,
            inertia: i,
            gravity: g,
        } = *self;
        let j = i + m * l * l;
        let den = j * (big_m + m) - m * m * l * l;
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0,            0.0,                         0.0,
            0.0, -j * b / den,   m * m * g * l * l / den,     0.0,
            0.0, 0.0,            0.0,                         1.0,
            0.0, -m * l * b / den, m * g * l * (big_m + m) / den, 0.0,
        ]);
        let bm = DMatrix::from_column_slice(4, 1, &[0.0, j / den, 0.0, m * l / den]);
        Ok((a, bm))
    }
}

/// Zero-order-hold discretization through the exponential of the augmented
/// `(n+m)`-square block matrix `[[A_c, B_c], [0, 0]] · T_s`.
pub fn discretize_zoh(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    sampling_period: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(sampling_period > 0.0) {
        return Err(Error::config("sampling period must be positive"));
    }
    let n = a_c.nrows();
    if !a_c.is_square() || b_c.nrows() != n {
        return Err(Error::dim("discretize_zoh: A_c must be square and match B_c rows"));
    }
    let m = b_c.ncols();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * sampling_period));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * sampling_period));
    let e = linalg::expm(&aug)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn presets_have_expected_scalar_dynamics() {
        assert_eq!(make_preset(SystemClass::Easy).unwrap().a()[(0, 0)], 1.0);
        assert_eq!(make_preset(SystemClass::Mid).unwrap().a()[(0, 0)], 1.1);
        assert_eq!(make_preset(SystemClass::Hard).unwrap().a()[(0, 0)], 1.2);
        let ip = make_preset(SystemClass::Pendulum).unwrap();
        assert_eq!(ip.noise_cov()[(2, 2)], 2.742e-5);
        assert_eq!(ip.state_dim(), 4);
        assert_eq!(ip.input_dim(), 1);
        for class in SystemClass::ALL {
            let sys = make_preset(class).unwrap();
            assert_eq!(sys.sampling_period(), 0.010);
            assert!(linalg::spectral_radius(&sys.closed_loop()) < 1.0);
        }
    }

    #[test]
    fn unknown_class_is_config_error() {
        assert!(matches!("medium".parse::<SystemClass>(), Err(Error::Config(_))));
        assert_eq!("IP".parse::<SystemClass>().unwrap(), SystemClass::Pendulum);
    }

    #[test]
    fn rejects_bad_matrices() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let two = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            LtiSystem::new("x", one.clone(), two.clone(), one.clone(), one.clone(), one.clone(), 0.01),
            Err(Error::Dimension(_))
        ));
        let full = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        assert!(LtiSystem::new("x", two.clone(), DMatrix::from_element(2, 1, 1.0), full, two.clone(), one.clone(), 0.01).is_err());
        let zero_r = DMatrix::from_element(1, 1, 0.0);
        assert!(LtiSystem::new("x", one.clone(), one.clone(), one.clone(), one.clone(), zero_r, 0.01).is_err());
    }

    #[test]
    fn zoh_of_zero_dynamics_is_integrator() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let b = DMatrix::from_column_slice(2, 1, &[2.0, -1.0]);
        let (ad, bd) = discretize_zoh(&a, &b, 0.25).unwrap();
        assert_eq!(ad, DMatrix::identity(2, 2));
        assert_relative_eq!(bd[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(bd[(1, 0)], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn zoh_scalar_exponential() {
        let (ad, bd) = discretize_zoh(
            &DMatrix::from_element(1, 1, -2.0),
            &DMatrix::from_element(1, 1, 1.0),
            0.3,
        )
        .unwrap();
        assert_relative_eq!(ad[(0, 0)], (-0.6f64).exp(), max_relative = 1e-13);
        // ∫₀ᵀ e^{aτ} dτ · b = (e^{aT} − 1)/a
        assert_relative_eq!(bd[(0, 0)], ((-0.6f64).exp() - 1.0) / -2.0, max_relative = 1e-12);
    }

    #[test]
    fn pendulum_params_must_be_positive() {
        let p = PendulumParams { friction: 0.0, ..Default::default() };
        assert!(p.continuous_model().is_err());
    }
}
