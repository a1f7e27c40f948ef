//! Plant simulation, remote estimation, LQR synthesis, and the shipped plant
//! presets.

mod dare;
mod plant;
mod system;

pub use dare::{lqr_gain, riccati_map, riccati_residual, solve_dare, DareSolution, DARE_MAX_ITER, DARE_TOL};
pub use plant::{
    control_input, estimate_state, lqg_stage_cost, step_plant, LoopState, DIVERGENCE_THRESHOLD,
    MAX_INPUT_HISTORY,
};
pub use system::{
    discretize_zoh, make_preset, pendulum_system, LtiSystem, PendulumParams, SystemClass,
    DEFAULT_SAMPLING_PERIOD,
};
