//! Event-driven engine binding plants, queues, access policies, and the
//! channel into runs, plus the parallel replication harness.

mod config;
mod engine;
mod events;
mod replicate;

pub use config::{class_systems, SimConfig};
pub use engine::{rng_stream, run, run_with_seed, EngineStats, LoopTrace, RunResult, StreamPurpose};
pub use events::{Event, EventQueue};
pub use replicate::{run_replications, run_replications_with, summarize, MetricSummary, Replications, CONFIDENCE};
