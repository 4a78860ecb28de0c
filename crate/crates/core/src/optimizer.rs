//! Per-worker ask/tell engine.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    constant_liar_batch, draw_kappa, select_argmax, select_boltzmann, KappaPolicy, LiarBatch, Selection,
    SelectionPolicy, SelectorConfig,
};
use crate::forest::{Forest, ForestError, ForestParams, MaxFeatures};
use crate::history::{training_set, History, WorkerId};
use crate::space::{Config, FeatureMatrix, ParamSpace};

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("history shrank from {before} to {after} records")]
    HistoryShrank { before: usize, after: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kappa_policy: KappaPolicy,
    pub selector: SelectorConfig,
    /// Random evaluations before the first fit; `None` means `max(10, n_dims)`.
    pub n_initial: Option<usize>,
    pub n_max_sample: usize,
    /// Use `log2(n_feature)` candidate features per split instead of all.
    pub feature_reduction: bool,
    pub refit_every: usize,
    pub forest: ForestParams,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kappa_policy: KappaPolicy::default(),
            selector: SelectorConfig::default(),
            n_initial: None,
            n_max_sample: 5000,
            feature_reduction: false,
            refit_every: 1,
            forest: ForestParams::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.n_initial == Some(0) {
            return Err(OptimizerError::InvalidConfig("n_initial must be at least 1"));
        }
        if self.refit_every == 0 {
            return Err(OptimizerError::InvalidConfig("refit_every must be at least 1"));
        }
        if self.n_max_sample < crate::history::QUANTILE_BINS {
            return Err(OptimizerError::InvalidConfig("n_max_sample must be at least 5"));
        }
        if self.selector.n_candidates == 0 {
            return Err(OptimizerError::InvalidConfig("n_candidates must be at least 1"));
        }
        if !(self.kappa_policy.kappa >= 0.0 && self.kappa_policy.kappa.is_finite()) {
            return Err(OptimizerError::InvalidConfig("kappa must be finite and non-negative"));
        }
        self.forest.validate()?;
        Ok(())
    }

    pub fn n_initial_for(&self, n_dims: usize) -> usize {
        self.n_initial.unwrap_or(n_dims.max(10))
    }

    pub fn forest_params(&self) -> ForestParams {
        let max_features = if self.feature_reduction { MaxFeatures::Log2 } else { MaxFeatures::All };
        ForestParams { max_features, ..self.forest }
    }
}

/// Size of one surrogate refit, used by cost models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitSummary {
    pub n_train: usize,
    pub n_tree: usize,
    pub max_features: usize,
}

impl FitSummary {
    fn of(forest: &Forest) -> Self {
        Self { n_train: forest.n_train(), n_tree: forest.n_tree(), max_features: forest.max_features() }
    }
}

/// Outcome of [`WorkerState::ask_detailed`]; `selection` is `None` for random
/// cold-start proposals.
#[derive(Debug, Clone)]
pub struct Ask {
    pub config: Config,
    pub selection: Option<Selection>,
}

/// One worker's optimizer: its κ, knowledge, surrogate and random stream.
#[derive(Debug, Clone)]
pub struct WorkerState {
    worker_id: WorkerId,
    kappa_i: f64,
    history: History,
    /// Size of the last history told, kept across `take_history`.
    told: usize,
    forest: Option<Forest>,
    training: Option<(FeatureMatrix, Vec<f64>)>,
    rng: ChaCha8Rng,
    step: usize,
    n_initial: usize,
    config: OptimizerConfig,
    space: Arc<ParamSpace>,
}

impl WorkerState {
    /// Seeds the worker's stream from `(seed, worker_id)` and draws its κ.
    pub fn new(
        worker_id: WorkerId,
        space: Arc<ParamSpace>,
        config: OptimizerConfig,
        seed: u64,
    ) -> Result<Self, OptimizerError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(worker_id as u64);
        let kappa_i = draw_kappa(&config.kappa_policy, &mut rng);
        Ok(Self {
            worker_id,
            kappa_i,
            history: History::new(),
            told: 0,
            forest: None,
            training: None,
            rng,
            step: 0,
            n_initial: config.n_initial_for(space.n_dims()),
            config,
            space,
        })
    }

    pub fn worker_id(&self) -> WorkerId {
        self.worker_id
    }

    pub fn kappa_i(&self) -> f64 {
        self.kappa_i
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Moves the history out, e.g. to merge received records before `tell`.
    pub fn take_history(&mut self) -> History {
        std::mem::take(&mut self.history)
    }

    pub fn forest(&self) -> Option<&Forest> {
        self.forest.as_ref()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn n_initial(&self) -> usize {
        self.n_initial
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn space(&self) -> &Arc<ParamSpace> {
        &self.space
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Marks one evaluation by this worker as complete.
    pub fn complete_evaluation(&mut self) {
        self.step += 1;
    }

    fn cold(&self) -> bool {
        self.forest.is_none() || self.history.n_sample() < self.n_initial
    }

    pub fn ask(&mut self) -> Result<Config, OptimizerError> {
        Ok(self.ask_detailed()?.config)
    }

    /// Proposes the next configuration with the worker's own κ.
    pub fn ask_detailed(&mut self) -> Result<Ask, OptimizerError> {
        self.ask_with_kappa(self.kappa_i)
    }

    /// Proposes a configuration using `kappa` in place of the worker's κ.
    pub fn ask_with_kappa(&mut self, kappa: f64) -> Result<Ask, OptimizerError> {
        if self.cold() {
            return Ok(Ask { config: self.space.sample_one(&mut self.rng), selection: None });
        }
        let forest = self.forest.as_ref().expect("warm worker has a forest");
        let sel = &self.config.selector;
        let s = match sel.policy {
            SelectionPolicy::UcbArgmax => select_argmax(forest, &self.space, kappa, sel, &mut self.rng)?,
            SelectionPolicy::Boltzmann => select_boltzmann(forest, &self.space, kappa, sel, self.step, &mut self.rng)?,
        };
        Ok(Ask { config: s.config.clone(), selection: Some(s) })
    }

    /// Constant-liar batch of `q` points lying with the best objective seen.
    /// Cold workers return `q` random points and perform no refits.
    pub fn ask_liar_batch(&mut self, q: usize) -> Result<LiarBatch, OptimizerError> {
        if self.cold() {
            let configs = self.space.sample(q, &mut self.rng);
            return Ok(LiarBatch { configs, refit_sizes: Vec::new() });
        }
        let lie = self.history.max_objective().expect("warm worker has records");
        let forest = self.forest.as_ref().expect("warm worker has a forest");
        let (x, y) = self.training.as_ref().expect("training set kept with the forest");
        let params = self.config.forest_params();
        Ok(constant_liar_batch(
            forest,
            &self.space,
            self.kappa_i,
            &self.config.selector,
            q,
            lie,
            (x, y),
            &params,
            &mut self.rng,
        )?)
    }

    /// Replaces the history with `h` without refitting.
    pub fn observe(&mut self, h: History) -> Result<(), OptimizerError> {
        if h.n_sample() < self.told {
            return Err(OptimizerError::HistoryShrank { before: self.told, after: h.n_sample() });
        }
        self.told = h.n_sample();
        self.history = h;
        Ok(())
    }

    /// Replaces the history with `h` and refits when due.
    pub fn tell(&mut self, h: History) -> Result<Option<FitSummary>, OptimizerError> {
        self.observe(h)?;
        if self.history.n_sample() < self.n_initial || !self.step.is_multiple_of(self.config.refit_every) {
            return Ok(None);
        }
        let sample = self.history.undersample(self.config.n_max_sample, &mut self.rng);
        let (x, y) = training_set(&self.space, sample);
        let forest = Forest::fit(&x, &y, &self.config.forest_params(), &mut self.rng)?;
        let summary = FitSummary::of(&forest);
        self.forest = Some(forest);
        self.training = Some((x, y));
        Ok(Some(summary))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{ucb_scores, KappaMode};
    use crate::history::EvalRecord;
    use crate::space::ParamValue;

    fn space1() -> Arc<ParamSpace> {
        Arc::new(ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap())
    }

    fn small_config() -> OptimizerConfig {
        let mut c = OptimizerConfig::default();
        c.selector.n_candidates = 500;
        c.forest.n_tree = 20;
        c
    }

    fn peaked_history(n: u64) -> History {
        (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                EvalRecord {
                    config: Config::reals(&[x]),
                    objective: -(x - 0.3f64).powi(2),
                    t_start: 0.0,
                    t_end: 1.0,
                    worker_id: 1,
                    seq: i,
                }
            })
            .collect()
    }

    #[test]
    fn defaults() {
        let c = OptimizerConfig::default();
        assert_eq!(c.n_initial_for(5), 10);
        assert_eq!(c.n_initial_for(12), 12);
        assert_eq!(c.refit_every, 1);
        assert_eq!(c.kappa_policy.kappa, 1.96);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = OptimizerConfig { refit_every: 0, ..Default::default() };
        assert!(WorkerState::new(1, space1(), c, 0).is_err());
        let c = OptimizerConfig { n_initial: Some(0), ..Default::default() };
        assert!(WorkerState::new(1, space1(), c, 0).is_err());
    }

    #[test]
    fn fresh_worker_asks_randomly() {
        let mut w = WorkerState::new(1, space1(), small_config(), 0).unwrap();
        let a = w.ask_detailed().unwrap();
        assert!(a.selection.is_none());
        assert!(w.space().contains(&a.config));
        assert_eq!(w.step(), 0);
    }

    #[test]
    fn fit_threshold_is_n_initial() {
        let mut w = WorkerState::new(1, space1(), small_config(), 0).unwrap();
        assert!(w.tell(peaked_history(9)).unwrap().is_none());
        assert!(w.forest().is_none());
        let fit = w.tell(peaked_history(10)).unwrap().unwrap();
        assert_eq!(fit.n_train, 10);
        assert!(w.forest().is_some());
    }

    #[test]
    fn warm_ask_comes_from_the_pool() {
        let mut w = WorkerState::new(1, space1(), small_config(), 1).unwrap();
        w.tell(peaked_history(10)).unwrap();
        let a = w.ask_detailed().unwrap();
        let s = a.selection.unwrap();
        assert!(s.pool.rows().any(|r| r == w.space().encode(&a.config).as_slice()));
    }

    #[test]
    fn zero_kappa_worker_picks_pool_maximum_of_mu() {
        let mut c = small_config();
        c.kappa_policy = KappaPolicy { mode: KappaMode::Fixed, kappa: 0.0 };
        let mut w = WorkerState::new(2, space1(), c, 2).unwrap();
        w.tell(peaked_history(30)).unwrap();
        let a = w.ask_detailed().unwrap();
        let s = a.selection.unwrap();
        let forest = w.forest().unwrap();
        let mu = forest.predict(&w.space().encode(&a.config)).unwrap().mu;
        let best = ucb_scores(forest, &s.pool, 0.0).unwrap().into_iter().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(mu, best);
        let ParamValue::Real(x) = a.config.values[0] else { panic!() };
        assert!((x - 0.3).abs() < 0.15, "{x}");
    }

    #[test]
    fn training_set_is_capped() {
        let mut c = small_config();
        c.n_max_sample = 5000;
        c.forest.n_tree = 2;
        let mut w = WorkerState::new(1, space1(), c, 3).unwrap();
        let fit = w.tell(peaked_history(12_000)).unwrap().unwrap();
        assert!(fit.n_train <= 5000);
    }

    #[test]
    fn tell_rejects_shrinking_history() {
        let mut w = WorkerState::new(1, space1(), small_config(), 4).unwrap();
        w.tell(peaked_history(12)).unwrap();
        assert!(matches!(w.tell(peaked_history(11)), Err(OptimizerError::HistoryShrank { .. })));
    }

    #[test]
    fn refit_every_skips_steps() {
        let mut c = small_config();
        c.refit_every = 2;
        let mut w = WorkerState::new(1, space1(), c, 5).unwrap();
        w.complete_evaluation();
        assert!(w.tell(peaked_history(12)).unwrap().is_none());
        w.complete_evaluation();
        assert!(w.tell(peaked_history(13)).unwrap().is_some());
    }

    #[test]
    fn kappa_streams_differ_by_worker() {
        let a = WorkerState::new(1, space1(), small_config(), 9).unwrap().kappa_i();
        let b = WorkerState::new(2, space1(), small_config(), 9).unwrap().kappa_i();
        let a2 = WorkerState::new(1, space1(), small_config(), 9).unwrap().kappa_i();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn liar_batch_from_cold_and_warm_workers() {
        let mut w = WorkerState::new(0, space1(), small_config(), 6).unwrap();
        let cold = w.ask_liar_batch(4).unwrap();
        assert_eq!((cold.configs.len(), cold.refits()), (4, 0));
        w.tell(peaked_history(20)).unwrap();
        let warm = w.ask_liar_batch(4).unwrap();
        assert_eq!((warm.configs.len(), warm.refits()), (4, 3));
    }
}
