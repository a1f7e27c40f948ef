use std::collections::VecDeque;

use nalgebra::DVector;

use crate::control::LtiSystem;
use crate::error::{Error, Result};

/// |x| beyond which a loop is flagged as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Upper bound on stored inputs; an age beyond this aborts the run.
pub const MAX_INPUT_HISTORY: usize = 1 << 24;

fn check_len(what: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

/// One plant step: `x' = A x + B u + w`.
pub fn step_plant(
    sys: &LtiSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("state", x, sys.state_dim())?;
    check_len("input", u, sys.input_dim())?;
    check_len("noise", noise, sys.state_dim())?;
    Ok(sys.a() * x + sys.b() * u + noise)
}

/// Conditional-mean estimate of the current state from a sample that is
/// `age` periods old.
///
/// `inputs` holds the applied inputs newest first: `u[t−1], u[t−2], …`.
/// Evaluates `A^Δ x[ν] + Σ_{q=1..Δ} A^{q−1} B u[t−q]` term by term.
pub fn estimate_state(
    sys: &LtiSystem,
    freshest: &DVector<f64>,
    inputs: &[DVector<f64>],
    age: usize,
) -> Result<DVector<f64>> {
    check_len("freshest state", freshest, sys.state_dim())?;
    if inputs.len() < age {
        return Err(Error::Invariant(format!(
            "estimator needs {age} past inputs but only {} are stored",
            inputs.len()
        )));
    }
    let a = sys.a();
    let mut a_pow = nalgebra::DMatrix::<f64>::identity(sys.state_dim(), sys.state_dim());
    let mut sum = DVector::zeros(sys.state_dim());
    for u in inputs.iter().take(age) {
        check_len("input", u, sys.input_dim())?;
        sum += &a_pow * sys.b() * u;
        a_pow = a * a_pow;
    }
    Ok(a_pow * freshest + sum)
}

/// `u = −L* x̂`.
pub fn control_input(sys: &LtiSystem, estimate: &DVector<f64>) -> DVector<f64> {
    -(sys.gain() * estimate)
}

/// `xᵀQx + uᵀRu`.
pub fn lqg_stage_cost(sys: &LtiSystem, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    x.dot(&(sys.q() * x)) + u.dot(&(sys.r() * u))
}

/// Inputs applied since the freshest received sample, oldest first.
#[derive(Debug, Clone, Default)]
struct InputHistory {
    /// Step index of the front entry.
    base: u64,
    inputs: VecDeque<DVector<f64>>,
}

impl InputHistory {
    fn push(&mut self, u: DVector<f64>) -> Result<()> {
        if self.inputs.len() >= MAX_INPUT_HISTORY {
            return Err(Error::Invariant(format!(
                "input history exceeded {MAX_INPUT_HISTORY} entries"
            )));
        }
        self.inputs.push_back(u);
        Ok(())
    }

    fn drop_before(&mut self, step: u64) {
        while self.base < step && !self.inputs.is_empty() {
            self.inputs.pop_front();
            self.base += 1;
        }
        self.base = self.base.max(step);
    }
}

/// Runtime state of one control loop: the true plant state, the controller's
/// estimate and input, and the freshest sample the controller has received.
#[derive(Debug, Clone)]
pub struct LoopState {
    state: DVector<f64>,
    estimate: DVector<f64>,
    input: DVector<f64>,
    history: InputHistory,
    freshest: DVector<f64>,
    freshest_step: u64,
    resync: bool,
    step: u64,
    diverged: bool,
}

impl LoopState {
    /// Starts at step 0 with the controller holding the exact initial state.
    pub fn new(sys: &LtiSystem, initial: DVector<f64>) -> Result<Self> {
        check_len("initial state", &initial, sys.state_dim())?;
        Ok(Self {
            estimate: initial.clone(),
            input: DVector::zeros(sys.input_dim()),
            history: InputHistory::default(),
            freshest: initial.clone(),
            freshest_step: 0,
            resync: true,
            state: initial,
            step: 0,
            diverged: false,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }
    /// True state `x[t]`.
    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }
    /// Estimate `x̂[t]` as of the last [`LoopState::control`] call.
    pub fn estimate(&self) -> &DVector<f64> {
        &self.estimate
    }
    /// Input `u[t]` as of the last [`LoopState::control`] call.
    pub fn input(&self) -> &DVector<f64> {
        &self.input
    }
    pub fn freshest_step(&self) -> u64 {
        self.freshest_step
    }
    /// `Δ = t − ν`.
    pub fn age(&self) -> u64 {
        self.step - self.freshest_step
    }
    pub fn diverged(&self) -> bool {
        self.diverged
    }
    pub fn history_len(&self) -> usize {
        self.history.inputs.len()
    }

    /// Hands a received sample to the controller. Returns whether it was
    /// strictly fresher than what the controller already had.
    pub fn receive(&mut self, sample: &DVector<f64>, gen_step: u64) -> Result<bool> {
        if gen_step >= self.step {
            return Err(Error::Invariant(format!(
                "sample generated at step {gen_step} received before step {} began",
                self.step
            )));
        }
        if gen_step <= self.freshest_step {
            return Ok(false);
        }
        self.freshest.copy_from(sample);
        self.freshest_step = gen_step;
        self.history.drop_before(gen_step);
        self.resync = true;
        Ok(true)
    }

    /// Estimates `x̂[t]` and applies `u[t] = −L* x̂[t]`.
    pub fn control(&mut self, sys: &LtiSystem) -> Result<&DVector<f64>> {
        let a = sys.a();
        let b = sys.b();
        if self.resync {
            let age = self.age() as usize;
            if self.history.inputs.len() < age || self.history.base != self.freshest_step {
                return Err(Error::Invariant(format!(
                    "input history covers {} steps from {}, need {age} from {}",
                    self.history.inputs.len(),
                    self.history.base,
                    self.freshest_step
                )));
            }
            let mut x = self.freshest.clone();
            for u in self.history.inputs.iter().take(age) {
                x = a * x + b * u;
            }
            self.estimate = x;
            self.resync = false;
        } else {
            self.estimate = a * &self.estimate + b * &self.input;
        }
        self.input = control_input(sys, &self.estimate);
        self.history.push(self.input.clone())?;
        Ok(&self.input)
    }

    /// Advances the plant by one period with the given noise draw.
    pub fn advance(&mut self, sys: &LtiSystem, noise: &DVector<f64>) -> Result<()> {
        self.state = step_plant(sys, &self.state, &self.input, noise)?;
        self.step += 1;
        if self.state.iter().any(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
            self.diverged = true;
        }
        Ok(())
    }

    pub fn stage_cost(&self, sys: &LtiSystem) -> f64 {
        lqg_stage_cost(sys, &self.state, &self.input)
    }
}
