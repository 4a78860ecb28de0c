//! Experiment runner: wires workers, transport and benchmarks into the
//! supported search methods and produces reports.

mod config;
mod des;
pub mod events;
mod manager;
mod realtime;
mod report;

pub use config::{BatchStrategy, CostModel, ExperimentConfig, FlatConfig, Method, Runner};
pub use events::{Event, EventKind};
pub use report::{compare, Comparison, ComparisonRow, ExperimentReport, ReportSummary, Stat, WorkerTimeline};

use crate::bench::BenchError;
use crate::optimizer::OptimizerError;
use crate::transport::TransportError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{0}")]
    Worker(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    ConfigFile(#[from] toml::de::Error),
}

/// Validates `cfg` and executes it on the configured runner.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    match cfg.runner {
        Runner::Sim => des::run(cfg),
        Runner::Realtime => realtime::run(cfg),
    }
}

/// Probability that `n_draws` uniform samples in `[low, high]^dim` land at
/// least once within `epsilon` of a fixed point in every coordinate.
pub fn random_search_success_probability(low: f64, high: f64, epsilon: f64, dim: u32, n_draws: u64) -> f64 {
    assert!(epsilon > 0.0 && high > low, "need epsilon > 0 and high > low");
    let p_eps = (2.0 * epsilon / (high - low)).min(1.0);
    let p_d = p_eps.powi(dim as i32);
    if p_d >= 1.0 {
        return if n_draws == 0 { 0.0 } else { 1.0 };
    }
    // 1 - (1 - p_d)^n without cancellation for tiny p_d.
    -(n_draws as f64 * (-p_d).ln_1p()).exp_m1()
}
