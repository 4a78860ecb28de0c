//! Candidate scoring and selection: UCB, per-worker κ draws, the Boltzmann
//! policy over UCB scores, and constant-liar batches.
//!
//! All selectors work on a random pool of configurations drawn from the
//! search space; scores are computed for the whole pool in one batched
//! forest prediction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::forest::{Forest, ForestError, ForestParams, Prediction};
use crate::space::{Config, FeatureMatrix, ParamSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaMode {
    Fixed,
    /// `κ_i ~ Exp(1/κ)`, i.e. exponential with mean κ.
    #[default]
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPolicy {
    pub mode: KappaMode,
    pub kappa: f64,
}

impl Default for KappaPolicy {
    fn default() -> Self {
        Self { mode: KappaMode::Exponential, kappa: 1.96 }
    }
}

impl KappaPolicy {
    pub fn fixed(kappa: f64) -> Self {
        Self { mode: KappaMode::Fixed, kappa }
    }

    pub fn exponential(kappa: f64) -> Self {
        Self { mode: KappaMode::Exponential, kappa }
    }
}

/// Draws the exploration weight a worker will use for its whole run.
pub fn draw_kappa<R: Rng + ?Sized>(policy: &KappaPolicy, rng: &mut R) -> f64 {
    debug_assert!(policy.kappa >= 0.0);
    match policy.mode {
        KappaMode::Fixed => policy.kappa,
        KappaMode::Exponential => {
            // u in (0, 1]
            let u = 1.0 - rng.random::<f64>();
            -policy.kappa * u.ln()
        }
    }
}

/// Upper confidence bound `μ + κσ`.
#[inline]
pub fn ucb(pred: Prediction, kappa: f64) -> f64 {
    pred.mu + kappa * pred.sigma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    #[default]
    UcbArgmax,
    Boltzmann,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemperatureSchedule {
    /// `T(step) = 1 / ln(step + 2)`.
    #[default]
    InverseLog,
    Constant(f64),
}

impl TemperatureSchedule {
    pub fn temperature(&self, step: usize) -> f64 {
        match *self {
            TemperatureSchedule::InverseLog => 1.0 / ((step + 2) as f64).ln(),
            TemperatureSchedule::Constant(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub n_candidates: usize,
    pub policy: SelectionPolicy,
    pub temperature: TemperatureSchedule,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self { n_candidates: 10_000, policy: SelectionPolicy::UcbArgmax, temperature: TemperatureSchedule::InverseLog }
    }
}

/// A selected candidate together with the pool it was chosen from.
#[derive(Debug, Clone)]
pub struct Selection {
    pub config: Config,
    pub index: usize,
    pub score: f64,
    pub pool: FeatureMatrix,
}

pub fn ucb_scores(forest: &Forest, pool: &FeatureMatrix, kappa: f64) -> Result<Vec<f64>, ForestError> {
    Ok(forest.predict_batch(pool)?.into_iter().map(|p| ucb(p, kappa)).collect())
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Softmax of `scores / temperature`, shifted by the maximum score so large
/// scores cannot overflow.
pub fn boltzmann_probabilities(scores: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert!(temperature > 0.0);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` slightly below 1; fall back to the last positive weight.
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn draw_pool<R: Rng + ?Sized>(space: &ParamSpace, cfg: &SelectorConfig, rng: &mut R) -> FeatureMatrix {
    space.sample_encoded(cfg.n_candidates.max(1), rng)
}

fn finish(space: &ParamSpace, pool: FeatureMatrix, index: usize, score: f64) -> Selection {
    let config = space.decode(pool.row(index)).expect("pool rows are encoded from the space");
    Selection { config, index, score, pool }
}

/// Scores a fresh candidate pool with UCB and returns the best candidate.
pub fn select_argmax<R: Rng + ?Sized>(
    forest: &Forest,
    space: &ParamSpace,
    kappa: f64,
    cfg: &SelectorConfig,
    rng: &mut R,
) -> Result<Selection, ForestError> {
    let pool = draw_pool(space, cfg, rng);
    let scores = ucb_scores(forest, &pool, kappa)?;
    let i = argmax(&scores);
    Ok(finish(space, pool, i, scores[i]))
}

/// Samples a candidate with probability proportional to
/// `exp((ucb - max ucb) / T(step))`.
pub fn select_boltzmann<R: Rng + ?Sized>(
    forest: &Forest,
    space: &ParamSpace,
    kappa: f64,
    cfg: &SelectorConfig,
    step: usize,
    rng: &mut R,
) -> Result<Selection, ForestError> {
    let pool = draw_pool(space, cfg, rng);
    let scores = ucb_scores(forest, &pool, kappa)?;
    let probabilities = boltzmann_probabilities(&scores, cfg.temperature.temperature(step));
    let i = sample_index(&probabilities, rng);
    Ok(finish(space, pool, i, scores[i]))
}

/// Result of a constant-liar batch.
#[derive(Debug, Clone)]
pub struct LiarBatch {
    pub configs: Vec<Config>,
    /// Training-set size of every intermediate refit, in order.
    pub refit_sizes: Vec<usize>,
}

impl LiarBatch {
    pub fn refits(&self) -> usize {
        self.refit_sizes.len()
    }
}

/// Selects `q` points one at a time, refitting on the training set augmented
/// with `(selected, lie)` before every selection but the first.
#[allow(clippy::too_many_arguments)]
pub fn constant_liar_batch<R: Rng + ?Sized>(
    forest: &Forest,
    space: &ParamSpace,
    kappa: f64,
    cfg: &SelectorConfig,
    q: usize,
    lie: f64,
    training: (&FeatureMatrix, &[f64]),
    params: &ForestParams,
    rng: &mut R,
) -> Result<LiarBatch, ForestError> {
    let mut configs = Vec::with_capacity(q);
    let mut refit_sizes = Vec::with_capacity(q.saturating_sub(1));
    let (x, y) = training;
    let mut scratch_x = x.clone();
    let mut scratch_y = y.to_vec();
    let mut refitted: Option<Forest> = None;
    for k in 0..q {
        if k > 0 {
            let last = configs.last().expect("previous selection");
            scratch_x.push_row(&space.encode(last));
            scratch_y.push(lie);
            refitted = Some(Forest::fit(&scratch_x, &scratch_y, params, rng)?);
            refit_sizes.push(scratch_y.len());
        }
        let model = refitted.as_ref().unwrap_or(forest);
        configs.push(select_argmax(model, space, kappa, cfg, rng)?.config);
    }
    Ok(LiarBatch { configs, refit_sizes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Tree;
    use crate::space::ParamValue;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Forest on [0,1] whose mean peaks at x = 0.7.
    fn peaked_forest(seed: u64) -> (Forest, FeatureMatrix, Vec<f64>) {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -(x - 0.7f64).powi(2)).collect();
        let x = FeatureMatrix::from_rows(1, xs);
        let params = ForestParams { n_tree: 20, ..Default::default() };
        let f = Forest::fit(&x, &ys, &params, &mut rng(seed)).unwrap();
        (f, x, ys)
    }

    #[test]
    fn fixed_kappa_is_returned_verbatim() {
        assert_eq!(draw_kappa(&KappaPolicy::fixed(1.96), &mut rng(0)), 1.96);
    }

    #[test]
    fn zero_kappa_exponential_is_zero() {
        let p = KappaPolicy::exponential(0.0);
        for _ in 0..10 {
            assert_eq!(draw_kappa(&p, &mut rng(1)), 0.0);
        }
    }

    #[test]
    fn exponential_kappa_has_mean_kappa() {
        let p = KappaPolicy::exponential(1.96);
        let mut r = rng(2);
        let n = 100_000;
        let mean = (0..n).map(|_| draw_kappa(&p, &mut r)).sum::<f64>() / n as f64;
        assert!((1.93..=1.99).contains(&mean), "mean {mean}");
    }

    #[test]
    fn exponential_kappa_matches_cdf() {
        let kappa = 1.96;
        let p = KappaPolicy::exponential(kappa);
        let mut r = rng(3);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| draw_kappa(&p, &mut r)).collect();
        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let cdf = 1.0 - (-t / kappa).exp();
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (cdf - lo).abs().max((hi - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn ucb_values() {
        let ucb1 = ucb(Prediction { mu: 1.0, sigma: 2.0 }, 1.96);
        assert!((ucb1 - 4.92).abs() < 1e-12);
        assert_eq!(ucb(Prediction { mu: 5.0, sigma: 3.0 }, 0.0), 5.0);
        assert_eq!(ucb(Prediction { mu: 0.0, sigma: 1.0 }, 10.0), 10.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[7.0]), 0);
    }

    #[test]
    fn single_candidate_pool_returns_it() {
        let space = ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap();
        let f = Forest::from_trees(vec![Tree::leaf(0.0, 0.0, 1)], 1);
        let cfg = SelectorConfig { n_candidates: 1, ..Default::default() };
        let s = select_argmax(&f, &space, 1.0, &cfg, &mut rng(4)).unwrap();
        assert_eq!(s.index, 0);
        assert_eq!(space.encode(&s.config), s.pool.row(0));
    }

    #[test]
    fn argmax_selection_matches_exhaustive_rescoring() {
        let (f, _, _) = peaked_forest(5);
        let space = ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap();
        let cfg = SelectorConfig { n_candidates: 10_000, ..Default::default() };
        let s = select_argmax(&f, &space, 0.0, &cfg, &mut rng(6)).unwrap();
        // Oracle: predict every pool member individually.
        let best = s.pool.rows().map(|row| f.predict(row).unwrap().mu).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.score, best);
        let ParamValue::Real(v) = s.config.values[0] else { panic!() };
        assert!((v - 0.7).abs() < 0.1, "selected {v}");
    }

    #[test]
    fn argmax_is_invariant_to_positive_scaling() {
        let (f, _, _) = peaked_forest(7);
        let space = ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap();
        let pool = space.sample_encoded(2000, &mut rng(8));
        let preds = f.predict_batch(&pool).unwrap();
        let kappa = 1.5;
        let base: Vec<f64> = preds.iter().map(|p| ucb(*p, kappa)).collect();
        let scaled: Vec<f64> =
            preds.iter().map(|p| ucb(Prediction { mu: 10.0 * p.mu, sigma: 10.0 * p.sigma }, kappa)).collect();
        assert_eq!(argmax(&base), argmax(&scaled));
    }

    #[test]
    fn ucb_is_monotone_in_sigma() {
        for kappa in [0.0, 0.5, 3.0] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..50 {
                let v = ucb(Prediction { mu: 1.0, sigma: i as f64 * 0.1 }, kappa);
                assert!(v >= prev);
                if kappa == 0.0 {
                    assert_eq!(v, 1.0);
                }
                prev = v;
            }
        }
    }

    #[test]
    fn boltzmann_probabilities_are_normalized_and_overflow_safe() {
        let p = boltzmann_probabilities(&[1e300, 5e299, -1e300, 1e300], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite()));
        assert_eq!(p[0], 0.5);
        assert_eq!(p[3], 0.5);
    }

    #[test]
    fn boltzmann_zero_temperature_is_argmax() {
        let (f, _, _) = peaked_forest(9);
        let space = ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap();
        let cfg = SelectorConfig {
            n_candidates: 200,
            policy: SelectionPolicy::Boltzmann,
            temperature: TemperatureSchedule::Constant(1e-9),
        };
        let mut r = rng(10);
        for _ in 0..100 {
            let s = select_boltzmann(&f, &space, 1.0, &cfg, 0, &mut r).unwrap();
            let scores = ucb_scores(&f, &s.pool, 1.0).unwrap();
            assert_eq!(s.score, scores[argmax(&scores)]);
        }
    }

    #[test]
    fn boltzmann_equal_scores_are_uniform() {
        let probabilities = boltzmann_probabilities(&[2.0; 4], 0.3);
        let mut r = rng(11);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[sample_index(&probabilities, &mut r)] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.15..=0.35).contains(&f), "freq {f}");
        }
    }

    #[test]
    fn boltzmann_hot_limit_is_near_uniform() {
        let scores = [0.0, 1.0, 5.0, 20.0];
        let probabilities = boltzmann_probabilities(&scores, 1e9);
        let mut r = rng(12);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[sample_index(&probabilities, &mut r)] += 1;
        }
        let tv: f64 = counts.iter().map(|&c| (c as f64 / n as f64 - 0.25).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.05, "total variation {tv}");
    }

    #[test]
    fn default_temperature_decays() {
        let s = TemperatureSchedule::InverseLog;
        assert!((s.temperature(0) - 1.0 / 2f64.ln()).abs() < 1e-15);
        assert!(s.temperature(100) < s.temperature(10));
    }

    #[test]
    fn constant_liar_refits_q_minus_one_times() {
        let (f, x, y) = peaked_forest(13);
        let space = ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap();
        let cfg = SelectorConfig { n_candidates: 500, ..Default::default() };
        let params = ForestParams { n_tree: 20, ..Default::default() };
        let lie = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for q in [1, 3] {
            let b = constant_liar_batch(&f, &space, 1.96, &cfg, q, lie, (&x, &y), &params, &mut rng(14)).unwrap();
            assert_eq!(b.configs.len(), q);
            assert_eq!(b.refits(), q - 1);
            assert_eq!(b.refit_sizes, (1..q).map(|k| y.len() + k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn constant_liar_q1_equals_argmax() {
        let (f, x, y) = peaked_forest(15);
        let space = ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap();
        let cfg = SelectorConfig { n_candidates: 500, ..Default::default() };
        let params = ForestParams { n_tree: 20, ..Default::default() };
        let b = constant_liar_batch(&f, &space, 0.5, &cfg, 1, 0.0, (&x, &y), &params, &mut rng(16)).unwrap();
        let s = select_argmax(&f, &space, 0.5, &cfg, &mut rng(16)).unwrap();
        assert_eq!(b.configs, vec![s.config]);
    }

    #[test]
    fn constant_liar_second_pick_moves() {
        let (f, x, y) = peaked_forest(17);
        let space = ParamSpace::uniform_box(&[(0.0, 1.0)]).unwrap();
        let cfg = SelectorConfig { n_candidates: 2000, ..Default::default() };
        let params = ForestParams { n_tree: 20, ..Default::default() };
        let lie = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let b = constant_liar_batch(&f, &space, 0.0, &cfg, 2, lie, (&x, &y), &params, &mut rng(18)).unwrap();
        assert_ne!(b.configs[0], b.configs[1]);
    }
}
