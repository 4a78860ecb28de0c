use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::HarnessError;
use crate::acquisition::{KappaMode, SelectionPolicy, TemperatureSchedule};
use crate::bench::{Benchmark, BenchmarkKind, RuntimeEmulator};
use crate::forest::SplitRule;
use crate::optimizer::{FitSummary, OptimizerConfig};

/// Search architecture plus acquisition scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    AdboQucb,
    SdboBucb,
    ScboCl,
    AcboCl,
    AcboQucb,
    AcboBucb,
    RdAcbo,
    Seq1,
}

/// How a centralized manager builds a batch of proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchStrategy {
    ConstantLiar,
    Qucb,
    Boltzmann,
    Random,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::AdboQucb,
        Method::SdboBucb,
        Method::ScboCl,
        Method::AcboCl,
        Method::AcboQucb,
        Method::AcboBucb,
        Method::RdAcbo,
        Method::Seq1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::AdboQucb => "adbo-qucb",
            Method::SdboBucb => "sdbo-bucb",
            Method::ScboCl => "scbo-cl",
            Method::AcboCl => "acbo-cl",
            Method::AcboQucb => "acbo-qucb",
            Method::AcboBucb => "acbo-bucb",
            Method::RdAcbo => "rd-acbo",
            Method::Seq1 => "seq-1",
        }
    }

    /// One manager owns the only history and hands out configurations.
    pub fn is_centralized(self) -> bool {
        matches!(self, Method::ScboCl | Method::AcboCl | Method::AcboQucb | Method::AcboBucb | Method::RdAcbo)
    }

    /// Workers rendezvous after every evaluation round.
    pub fn is_barrier_sync(self) -> bool {
        self == Method::SdboBucb
    }

    /// The manager waits for the whole batch before proposing again.
    pub fn is_batch_sync(self) -> bool {
        self == Method::ScboCl
    }

    pub fn batch_strategy(self) -> Option<BatchStrategy> {
        match self {
            Method::ScboCl | Method::AcboCl => Some(BatchStrategy::ConstantLiar),
            Method::AcboQucb => Some(BatchStrategy::Qucb),
            Method::AcboBucb => Some(BatchStrategy::Boltzmann),
            Method::RdAcbo => Some(BatchStrategy::Random),
            _ => None,
        }
    }

    /// Applies the method's κ mode and selection policy to `base`.
    pub fn optimizer_config(self, base: &OptimizerConfig) -> OptimizerConfig {
        let mut c = base.clone();
        let (mode, policy) = match self {
            Method::AdboQucb | Method::AcboQucb => (KappaMode::Exponential, SelectionPolicy::UcbArgmax),
            Method::SdboBucb | Method::AcboBucb => (KappaMode::Fixed, SelectionPolicy::Boltzmann),
            Method::ScboCl | Method::AcboCl | Method::Seq1 | Method::RdAcbo => {
                (KappaMode::Fixed, SelectionPolicy::UcbArgmax)
            }
        };
        c.kappa_policy.mode = mode;
        c.selector.policy = policy;
        c
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Simulated time charged for surrogate work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Microseconds per unit of `n_tree * max_features * m * log2(m)`.
    pub fit_coeff_us: f64,
    /// Microseconds per scored candidate per tree.
    pub select_coeff_us: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        // 100 trees, one feature, 5000 samples: about one second.
        Self { fit_coeff_us: 0.16, select_coeff_us: 0.0 }
    }
}

impl CostModel {
    pub fn free() -> Self {
        Self { fit_coeff_us: 0.0, select_coeff_us: 0.0 }
    }

    pub fn fit_seconds(&self, fit: FitSummary) -> f64 {
        let m = fit.n_train as f64;
        let log = if m > 1.0 { m.log2() } else { 0.0 };
        self.fit_coeff_us * 1e-6 * fit.n_tree as f64 * fit.max_features as f64 * m * log
    }

    pub fn select_seconds(&self, n_candidates: usize, n_tree: usize) -> f64 {
        self.select_coeff_us * 1e-6 * n_candidates as f64 * n_tree as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Runner {
    #[default]
    Sim,
    Realtime,
}

impl FromStr for Runner {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(Runner::Sim),
            "realtime" => Ok(Runner::Realtime),
            _ => Err(HarnessError::InvalidConfig(format!("unknown runner `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub n_worker: usize,
    /// Budget in simulated seconds.
    pub t_wall: f64,
    pub benchmark: Benchmark,
    pub emulator: RuntimeEmulator,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub cost: CostModel,
    /// Simulated message delivery delay between peers.
    pub latency: f64,
    pub runner: Runner,
    /// Real seconds per simulated second in the real-time runner.
    pub realtime_scale: f64,
}

impl ExperimentConfig {
    /// Default grid point: 5-D Ackley, 25 simulated minutes, N(60 s, 20 s).
    pub fn new(method: Method, n_worker: usize) -> Self {
        Self {
            method,
            n_worker,
            t_wall: 1500.0,
            benchmark: Benchmark::new(BenchmarkKind::Ackley, 5).expect("valid default benchmark"),
            emulator: RuntimeEmulator::default(),
            seed: 0,
            optimizer: OptimizerConfig::default(),
            cost: CostModel::default(),
            latency: 0.0,
            runner: Runner::Sim,
            realtime_scale: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::InvalidConfig(msg.to_string()));
        if self.n_worker == 0 {
            return bad("n_worker must be at least 1");
        }
        if self.method == Method::Seq1 && self.n_worker != 1 {
            return bad("seq-1 runs exactly one worker");
        }
        if !(self.t_wall > 0.0 && self.t_wall.is_finite()) {
            return bad("t_wall must be positive and finite");
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return bad("latency must be non-negative");
        }
        if !(self.cost.fit_coeff_us >= 0.0 && self.cost.select_coeff_us >= 0.0) {
            return bad("cost coefficients must be non-negative");
        }
        if !(self.realtime_scale > 0.0 && self.realtime_scale.is_finite()) {
            return bad("realtime_scale must be positive");
        }
        self.emulator.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }

    /// Optimizer configuration with the method's κ mode and policy applied.
    pub fn effective_optimizer(&self) -> OptimizerConfig {
        self.method.optimizer_config(&self.optimizer)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let flat: FlatConfig = toml::from_str(s)?;
        let method = flat.method.as_deref().map(str::parse).transpose()?.unwrap_or(Method::AdboQucb);
        let workers = flat.workers.unwrap_or(if method == Method::Seq1 { 1 } else { 8 });
        let mut cfg = ExperimentConfig::new(method, workers);
        flat.apply(&mut cfg)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Flat key/value experiment file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatConfig {
    pub method: Option<String>,
    pub benchmark: Option<String>,
    pub dim: Option<usize>,
    pub workers: Option<usize>,
    pub t_wall: Option<f64>,
    pub seed: Option<u64>,
    pub runner: Option<String>,
    pub eval_mean: Option<f64>,
    pub eval_sd: Option<f64>,
    pub eval_floor: Option<f64>,
    pub kappa: Option<f64>,
    pub n_candidates: Option<usize>,
    pub n_initial: Option<usize>,
    pub n_max_sample: Option<usize>,
    pub feature_reduction: Option<bool>,
    pub refit_every: Option<usize>,
    pub n_tree: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub split_rule: Option<String>,
    pub bootstrap: Option<bool>,
    /// Constant Boltzmann temperature; the decaying schedule when absent.
    pub temperature: Option<f64>,
    pub fit_cost_coeff_us: Option<f64>,
    pub select_cost_coeff_us: Option<f64>,
    pub latency: Option<f64>,
    pub realtime_scale: Option<f64>,
}

impl FlatConfig {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), HarnessError> {
        if let Some(m) = &self.method {
            cfg.method = m.parse()?;
        }
        if let Some(w) = self.workers {
            cfg.n_worker = w;
        }
        if self.benchmark.is_some() || self.dim.is_some() {
            let kind = match &self.benchmark {
                Some(name) => name.parse::<BenchmarkKind>()?,
                None => cfg.benchmark.kind(),
            };
            let default_dim = if kind == BenchmarkKind::Hartmann6d { 6 } else { cfg.benchmark.dim() };
            cfg.benchmark = Benchmark::new(kind, self.dim.unwrap_or(default_dim))?;
        }
        set(&mut cfg.t_wall, self.t_wall);
        set(&mut cfg.seed, self.seed);
        if let Some(r) = &self.runner {
            cfg.runner = r.parse()?;
        }
        set(&mut cfg.emulator.mean, self.eval_mean);
        set(&mut cfg.emulator.sd, self.eval_sd);
        set(&mut cfg.emulator.floor, self.eval_floor);
        let o = &mut cfg.optimizer;
        set(&mut o.kappa_policy.kappa, self.kappa);
        set(&mut o.selector.n_candidates, self.n_candidates);
        if self.n_initial.is_some() {
            o.n_initial = self.n_initial;
        }
        set(&mut o.n_max_sample, self.n_max_sample);
        set(&mut o.feature_reduction, self.feature_reduction);
        set(&mut o.refit_every, self.refit_every);
        set(&mut o.forest.n_tree, self.n_tree);
        set(&mut o.forest.min_samples_leaf, self.min_samples_leaf);
        set(&mut o.forest.bootstrap, self.bootstrap);
        if let Some(rule) = &self.split_rule {
            o.forest.split_rule = match rule.as_str() {
                "random" => SplitRule::Random,
                "best" => SplitRule::Best,
                _ => return Err(HarnessError::InvalidConfig(format!("unknown split rule `{rule}`"))),
            };
        }
        if let Some(t) = self.temperature {
            o.selector.temperature = TemperatureSchedule::Constant(t);
        }
        set(&mut cfg.cost.fit_coeff_us, self.fit_cost_coeff_us);
        set(&mut cfg.cost.select_coeff_us, self.select_cost_coeff_us);
        set(&mut cfg.latency, self.latency);
        set(&mut cfg.realtime_scale, self.realtime_scale);
        Ok(())
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
