use std::sync::Arc;

use super::config::BatchStrategy;
use crate::acquisition::draw_kappa;
use crate::history::EvalRecord;
use crate::optimizer::{FitSummary, OptimizerConfig, OptimizerError, WorkerState};
use crate::space::{Config, ParamSpace};

/// A batch of proposals plus the surrogate work it took.
#[derive(Debug, Clone)]
pub(crate) struct Proposal {
    pub configs: Vec<Config>,
    /// Intermediate constant-liar refits.
    pub refits: Vec<FitSummary>,
    /// Number of model-based selections (each scoring a full pool).
    pub selections: usize,
}

/// Central optimizer owning the run's only history and surrogate.
#[derive(Debug)]
pub(crate) struct Manager {
    state: WorkerState,
    strategy: BatchStrategy,
}

impl Manager {
    pub fn new(
        space: Arc<ParamSpace>,
        config: OptimizerConfig,
        strategy: BatchStrategy,
        seed: u64,
    ) -> Result<Self, OptimizerError> {
        Ok(Self { state: WorkerState::new(0, space, config, seed)?, strategy })
    }

    pub fn n_candidates(&self) -> usize {
        self.state.config().selector.n_candidates
    }

    pub fn n_tree(&self) -> usize {
        self.state.config().forest.n_tree
    }

    /// Adds completed records and refits once.
    pub fn ingest(&mut self, records: Vec<EvalRecord>) -> Result<Option<FitSummary>, OptimizerError> {
        let mut h = self.state.take_history();
        h.extend(records);
        if self.strategy == BatchStrategy::Random {
            self.state.observe(h)?;
            return Ok(None);
        }
        self.state.complete_evaluation();
        self.state.tell(h)
    }

    /// Adds records that arrive after the budget, without refitting.
    pub fn ingest_without_fit(&mut self, records: Vec<EvalRecord>) -> Result<(), OptimizerError> {
        let mut h = self.state.take_history();
        h.extend(records);
        self.state.observe(h)
    }

    pub fn propose(&mut self, q: usize) -> Result<Proposal, OptimizerError> {
        let warm = self.state.forest().is_some() && self.state.history().n_sample() >= self.state.n_initial();
        match self.strategy {
            BatchStrategy::Random => {
                let space = Arc::clone(self.state.space());
                let configs = space.sample(q, self.state.rng());
                Ok(Proposal { configs, refits: Vec::new(), selections: 0 })
            }
            BatchStrategy::ConstantLiar => {
                let batch = self.state.ask_liar_batch(q)?;
                let template = self.state.forest().map(|f| (f.n_tree(), f.max_features()));
                let refits = match template {
                    Some((n_tree, max_features)) => {
                        batch.refit_sizes.iter().map(|&n_train| FitSummary { n_train, n_tree, max_features }).collect()
                    }
                    None => Vec::new(),
                };
                Ok(Proposal { configs: batch.configs, refits, selections: if warm { q } else { 0 } })
            }
            BatchStrategy::Qucb | BatchStrategy::Boltzmann => {
                let policy = self.state.config().kappa_policy;
                let mut configs = Vec::with_capacity(q);
                for _ in 0..q {
                    let kappa = match self.strategy {
                        BatchStrategy::Qucb => draw_kappa(&policy, self.state.rng()),
                        _ => self.state.kappa_i(),
                    };
                    configs.push(self.state.ask_with_kappa(kappa)?.config);
                }
                Ok(Proposal { configs, refits: Vec::new(), selections: if warm { q } else { 0 } })
            }
        }
    }
}
