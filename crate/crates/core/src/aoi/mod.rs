//! Age-of-information bookkeeping, the age-to-error law, closed-form mean
//! ages of the random-access and round-robin protocols, and windowed metrics.

mod formulas;
mod metrics;
mod mse;

pub use formulas::{
    adra_mean_aoi, adra_mean_aoi_with_q, optimize_adra, rr_mean_aoi, sa_mean_aoi, solve_adra_q,
    AdraParams, ADRA_MAX_THRESHOLD,
};
pub use metrics::{
    AoiTracker, ClassShare, EvalWindow, LoopMetrics, MetricsAccumulator, NetworkMetrics, RunMetrics,
};
pub use mse::{error_covariance, mse_of_age, mse_overflow_count, nmse_of_age, ErrorMetric, MseTable};
