//! Random-forest regression surrogate with predictive variance.
//!
//! Each tree stores the mean and population variance of the training targets
//! that reach each leaf. The ensemble combines them with the law of total
//! variance: `σ²(x) = mean_t σ_t²(x) + var_t μ_t(x)`.
//!
//! The default split rule draws one uniform threshold per candidate feature
//! and keeps the candidate with the lowest weighted child variance. Exhaustive
//! best-split search is available for comparison; it produces predictive
//! variances that stay flat away from the data.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::FeatureMatrix;

/// Rows evaluated together in batched prediction.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("cannot fit on empty set")]
    EmptyTrainingSet,
    #[error("{features} feature rows but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("query has {got} features, forest was trained on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    /// One uniform threshold per candidate feature.
    #[default]
    Random,
    /// Exhaustive search over midpoints between distinct feature values.
    Best,
}

/// How many features are considered at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    #[default]
    All,
    /// `⌊log₂ n_feature⌋`, at least one.
    Log2,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_feature: usize) -> usize {
        let n = match self {
            MaxFeatures::All => n_feature,
            MaxFeatures::Log2 => {
                if n_feature == 0 {
                    0
                } else {
                    n_feature.ilog2() as usize
                }
            }
            MaxFeatures::Count(k) => k,
        };
        n.clamp(1, n_feature.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_tree: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub split_rule: SplitRule,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_tree: 100,
            max_features: MaxFeatures::All,
            min_samples_leaf: 1,
            split_rule: SplitRule::Random,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_tree == 0 {
            return Err(ForestError::InvalidParams("n_tree must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be at least 1"));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(ForestError::InvalidParams("max_features must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        mu: f64,
        var: f64,
        n: usize,
    },
}

/// A regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    packed: Vec<Packed>,
    /// Leaf `(mu, var)` by packed slot; zero for internal slots.
    values: Vec<(f64, f64)>,
}

/// Compact traversal node. Internal nodes keep their children adjacent
/// (`right = left + 1`). A leaf points at itself with an infinite threshold,
/// so stepping from a leaf stays put.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Packed {
    threshold: f64,
    feature: u32,
    child: u32,
}

impl Packed {
    #[inline(always)]
    fn step(&self, x: &[f64]) -> u32 {
        self.child + (x[self.feature as usize] > self.threshold) as u32
    }
}

fn pack(nodes: &[TreeNode]) -> (Vec<Packed>, Vec<(f64, f64)>) {
    let blank = Packed { threshold: f64::INFINITY, feature: 0, child: 0 };
    let mut packed = vec![blank];
    let mut values = vec![(0.0, 0.0)];
    // (arena index, packed slot)
    let mut stack = vec![(0usize, 0usize)];
    while let Some((i, slot)) = stack.pop() {
        match nodes[i] {
            TreeNode::Internal { feature, threshold, left, right } => {
                let child = packed.len();
                packed.extend([blank, blank]);
                values.extend([(0.0, 0.0), (0.0, 0.0)]);
                packed[slot] = Packed { threshold, feature: feature as u32, child: child as u32 };
                stack.push((right, child + 1));
                stack.push((left, child));
            }
            TreeNode::Leaf { mu, var, .. } => {
                packed[slot] = Packed { threshold: f64::INFINITY, feature: 0, child: slot as u32 };
                values[slot] = (mu, var);
            }
        }
    }
    (packed, values)
}

/// Rows traversed together; independent lanes overlap their memory stalls.
const LANES: usize = 8;

impl Tree {
    /// Single-leaf tree.
    pub fn leaf(mu: f64, var: f64, n: usize) -> Self {
        Self::from_nodes(vec![TreeNode::Leaf { mu, var, n }])
    }

    /// Builds a tree from an arena. Children must be referenced by index.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Self {
        assert!(!nodes.is_empty(), "a tree needs a root");
        let (packed, values) = pack(&nodes);
        Self { nodes, packed, values }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Leaf `(μ_tree, σ²_tree)` reached by `x`.
    #[inline]
    pub fn leaf_for(&self, x: &[f64]) -> (f64, f64) {
        let mut i = 0u32;
        loop {
            let next = self.packed[i as usize].step(x);
            if next == i {
                return self.values[i as usize];
            }
            i = next;
        }
    }

    /// Leaf slots for `LANES` rows of width `w` at once.
    #[inline]
    fn leaves_for_lanes(&self, rows: &[f64], w: usize) -> [u32; LANES] {
        let lanes: [&[f64]; LANES] = std::array::from_fn(|j| &rows[j * w..(j + 1) * w]);
        let mut idx = [0u32; LANES];
        loop {
            let mut moved = false;
            for (slot, x) in idx.iter_mut().zip(lanes) {
                let next = self.packed[*slot as usize].step(x);
                moved |= next != *slot;
                *slot = next;
            }
            if !moved {
                return idx;
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mu: f64,
    pub sigma: f64,
}

impl Prediction {
    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// A fitted ensemble. Immutable after fitting.
#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    n_feature: usize,
    max_features: usize,
    min_samples_leaf: usize,
    split_rule: SplitRule,
    n_train: usize,
}

impl Forest {
    /// Fits `params.n_tree` trees, each on a bootstrap resample of the data.
    pub fn fit<R: Rng + ?Sized>(
        x: &FeatureMatrix,
        y: &[f64],
        params: &ForestParams,
        rng: &mut R,
    ) -> Result<Self, ForestError> {
        params.validate()?;
        if y.is_empty() {
            return Err(ForestError::EmptyTrainingSet);
        }
        if x.n_rows() != y.len() {
            return Err(ForestError::LengthMismatch { features: x.n_rows(), targets: y.len() });
        }
        let n_feature = x.width();
        let max_features = params.max_features.resolve(n_feature);
        let builder = TreeBuilder {
            x: x.as_slice(),
            y,
            width: n_feature,
            max_features,
            min_samples_leaf: params.min_samples_leaf,
            split_rule: params.split_rule,
        };
        let n = y.len();
        let mut idx = Vec::with_capacity(n);
        let trees = (0..params.n_tree)
            .map(|_| {
                idx.clear();
                if params.bootstrap {
                    idx.extend((0..n).map(|_| rng.random_range(0..n)));
                } else {
                    idx.extend(0..n);
                }
                builder.build(&mut idx, rng)
            })
            .collect();
        Ok(Self {
            trees,
            n_feature,
            max_features,
            min_samples_leaf: params.min_samples_leaf,
            split_rule: params.split_rule,
            n_train: n,
        })
    }

    /// Assembles a forest from prebuilt trees.
    pub fn from_trees(trees: Vec<Tree>, n_feature: usize) -> Self {
        assert!(!trees.is_empty(), "a forest needs at least one tree");
        Self {
            trees,
            n_feature,
            max_features: n_feature.max(1),
            min_samples_leaf: 1,
            split_rule: SplitRule::Random,
            n_train: 0,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_tree(&self) -> usize {
        self.trees.len()
    }

    pub fn n_feature(&self) -> usize {
        self.n_feature
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    pub fn min_samples_leaf(&self) -> usize {
        self.min_samples_leaf
    }

    pub fn split_rule(&self) -> SplitRule {
        self.split_rule
    }

    /// Number of rows the forest was fitted on (zero for hand-built forests).
    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        if x.len() != self.n_feature {
            return Err(ForestError::DimensionMismatch { expected: self.n_feature, got: x.len() });
        }
        let mut out = Vec::with_capacity(1);
        self.predict_rows(x, 1, &mut out);
        Ok(out[0])
    }

    pub fn predict_batch(&self, x: &FeatureMatrix) -> Result<Vec<Prediction>, ForestError> {
        if x.width() != self.n_feature {
            return Err(ForestError::DimensionMismatch { expected: self.n_feature, got: x.width() });
        }
        let mut out = Vec::with_capacity(x.n_rows());
        for chunk in x.as_slice().chunks(PREDICT_CHUNK * self.n_feature.max(1)) {
            self.predict_rows(chunk, chunk.len() / self.n_feature.max(1), &mut out);
        }
        Ok(out)
    }

    /// Tree-major evaluation of `n_rows` contiguous rows.
    fn predict_rows(&self, rows: &[f64], n_rows: usize, out: &mut Vec<Prediction>) {
        let k = self.trees.len();
        let w = self.n_feature.max(1);
        // mus[t * n_rows + r]
        let mut mus = Vec::with_capacity(k * n_rows);
        let mut var_sum = vec![0.0; n_rows];
        for tree in &self.trees {
            let mut blocks = rows.chunks_exact(w * LANES);
            let mut r = 0;
            for block in blocks.by_ref() {
                for slot in tree.leaves_for_lanes(block, w) {
                    let (mu, var) = tree.values[slot as usize];
                    mus.push(mu);
                    var_sum[r] += var;
                    r += 1;
                }
            }
            for row in blocks.remainder().chunks_exact(w) {
                let (mu, var) = tree.leaf_for(row);
                mus.push(mu);
                var_sum[r] += var;
                r += 1;
            }
        }
        let mut tree_mus = vec![0.0; k];
        for (r, vs) in var_sum.into_iter().enumerate() {
            for (t, m) in tree_mus.iter_mut().enumerate() {
                *m = mus[t * n_rows + r];
            }
            let (mu, var) = total_variance(&tree_mus, vs);
            out.push(Prediction { mu, sigma: var.max(0.0).sqrt() });
        }
    }
}

/// Law of total variance over per-tree means with summed per-tree variances.
fn total_variance(tree_mus: &[f64], var_sum: f64) -> (f64, f64) {
    let k = tree_mus.len() as f64;
    // Deviations from the first tree keep agreeing trees at exactly zero spread.
    let shift = tree_mus[0];
    let offset = tree_mus.iter().map(|m| m - shift).sum::<f64>() / k;
    let between = tree_mus.iter().map(|m| (m - shift - offset).powi(2)).sum::<f64>() / k;
    (shift + offset, var_sum / k + between)
}

struct TreeBuilder<'a> {
    x: &'a [f64],
    y: &'a [f64],
    width: usize,
    max_features: usize,
    min_samples_leaf: usize,
    split_rule: SplitRule,
}

struct Split {
    feature: usize,
    threshold: f64,
    sse: f64,
}

impl TreeBuilder<'_> {
    #[inline]
    fn feature(&self, row: usize, f: usize) -> f64 {
        self.x[row * self.width + f]
    }

    fn build<R: Rng + ?Sized>(&self, idx: &mut [usize], rng: &mut R) -> Tree {
        let mut nodes = Vec::new();
        let mut features: Vec<usize> = (0..self.width).collect();
        let mut sort_buf = Vec::new();
        // (node slot, lo, hi)
        let mut stack = vec![(0usize, 0usize, idx.len())];
        nodes.push(TreeNode::Leaf { mu: 0.0, var: 0.0, n: 0 });
        while let Some((slot, lo, hi)) = stack.pop() {
            let rows = &mut idx[lo..hi];
            let split = self.choose_split(rows, &mut features, &mut sort_buf, rng);
            let Some(split) = split else {
                nodes[slot] = self.leaf(rows);
                continue;
            };
            let mid = lo + partition(rows, |r| self.feature(r, split.feature) <= split.threshold);
            debug_assert!(mid > lo && mid < hi);
            let left = nodes.len();
            nodes.push(TreeNode::Leaf { mu: 0.0, var: 0.0, n: 0 });
            let right = nodes.len();
            nodes.push(TreeNode::Leaf { mu: 0.0, var: 0.0, n: 0 });
            nodes[slot] = TreeNode::Internal { feature: split.feature, threshold: split.threshold, left, right };
            stack.push((right, mid, hi));
            stack.push((left, lo, mid));
        }
        Tree::from_nodes(nodes)
    }

    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let n = rows.len();
        let mu = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|&r| (self.y[r] - mu).powi(2)).sum::<f64>() / n as f64;
        TreeNode::Leaf { mu, var, n }
    }

    fn choose_split<R: Rng + ?Sized>(
        &self,
        rows: &[usize],
        features: &mut [usize],
        sort_buf: &mut Vec<(f64, f64)>,
        rng: &mut R,
    ) -> Option<Split> {
        let n = rows.len();
        if n < 2 * self.min_samples_leaf {
            return None;
        }
        let first = self.y[rows[0]];
        if rows.iter().all(|&r| self.y[r] == first) {
            return None;
        }

        // Visit features in random order until `max_features` non-constant
        // ones have been tried.
        let mut best: Option<Split> = None;
        let mut tried = 0;
        for i in 0..features.len() {
            if tried == self.max_features {
                break;
            }
            let j = rng.random_range(i..features.len());
            features.swap(i, j);
            let f = features[i];
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = self.feature(r, f);
                (lo.min(v), hi.max(v))
            });
            if lo >= hi {
                continue;
            }
            tried += 1;
            let candidate = match self.split_rule {
                SplitRule::Random => self.random_split(rows, f, lo, hi, rng),
                SplitRule::Best => self.best_split(rows, f, sort_buf),
            };
            if let Some(c) = candidate {
                if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn random_split<R: Rng + ?Sized>(&self, rows: &[usize], f: usize, lo: f64, hi: f64, rng: &mut R) -> Option<Split> {
        let threshold = rng.random_range(lo..hi);
        let (mut nl, mut sl, mut ql) = (0usize, 0.0, 0.0);
        let (mut nr, mut sr, mut qr) = (0usize, 0.0, 0.0);
        for &r in rows {
            let y = self.y[r];
            if self.feature(r, f) <= threshold {
                nl += 1;
                sl += y;
                ql += y * y;
            } else {
                nr += 1;
                sr += y;
                qr += y * y;
            }
        }
        if nl < self.min_samples_leaf || nr < self.min_samples_leaf {
            return None;
        }
        let sse = (ql - sl * sl / nl as f64) + (qr - sr * sr / nr as f64);
        Some(Split { feature: f, threshold, sse })
    }

    fn best_split(&self, rows: &[usize], f: usize, buf: &mut Vec<(f64, f64)>) -> Option<Split> {
        buf.clear();
        buf.extend(rows.iter().map(|&r| (self.feature(r, f), self.y[r])));
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = buf.len();
        let (total_s, total_q) = buf.iter().fold((0.0, 0.0), |(s, q), &(_, y)| (s + y, q + y * y));
        let (mut sl, mut ql) = (0.0, 0.0);
        let mut best: Option<Split> = None;
        for i in 0..n - 1 {
            let (v, y) = buf[i];
            sl += y;
            ql += y * y;
            let nl = i + 1;
            let nr = n - nl;
            let next = buf[i + 1].0;
            if v >= next || nl < self.min_samples_leaf || nr < self.min_samples_leaf {
                continue;
            }
            let sr = total_s - sl;
            let qr = total_q - ql;
            let sse = (ql - sl * sl / nl as f64) + (qr - sr * sr / nr as f64);
            if best.as_ref().is_none_or(|b| sse < b.sse) {
                let mut threshold = 0.5 * (v + next);
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Split { feature: f, threshold, sse });
            }
        }
        best
    }
}

/// Moves rows satisfying `goes_left` to the front; returns how many did.
fn partition(rows: &mut [usize], goes_left: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for i in 0..rows.len() {
        if goes_left(rows[i]) {
            rows.swap(i, mid);
            mid += 1;
        }
    }
    mid
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_d(points: &[(f64, f64)]) -> (FeatureMatrix, Vec<f64>) {
        let x = FeatureMatrix::from_rows(1, points.iter().map(|p| p.0).collect());
        (x, points.iter().map(|p| p.1).collect())
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let x = FeatureMatrix::with_width(1);
        let err = Forest::fit(&x, &[], &ForestParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err.to_string(), "cannot fit on empty set");
    }

    #[test]
    fn single_point_has_no_uncertainty() {
        let (x, y) = one_d(&[(0.0, 5.0)]);
        let params = ForestParams { n_tree: 10, ..Default::default() };
        let f = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for q in [-3.0, 0.0, 0.7, 100.0] {
            let p = f.predict(&[q]).unwrap();
            assert_eq!(p.mu, 5.0);
            assert_eq!(p.sigma, 0.0);
        }
    }

    #[test]
    fn two_points_mix_through_bootstrap() {
        let (x, y) = one_d(&[(0.0, 0.0), (1.0, 1.0)]);
        let params = ForestParams { n_tree: 50, ..Default::default() };
        let f = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let at_zero = f.predict(&[0.0]).unwrap();
        assert!((0.0..=1.0).contains(&at_zero.mu));
        assert!(f.predict(&[0.5]).unwrap().sigma > 0.0);
    }

    #[test]
    fn single_tree_two_point_outcomes_match_enumeration() {
        // With one tree, the bootstrap of {(0,0),(1,1)} is one of four equally
        // likely index pairs. Each yields a tree whose prediction at 0.0 is
        // either a pure leaf (0 or 1) or, when both points are drawn, the
        // left leaf of a split on the unique threshold range (0,1) → mu = 0.
        let (x, y) = one_d(&[(0.0, 0.0), (1.0, 1.0)]);
        let params = ForestParams { n_tree: 1, ..Default::default() };
        let mut outcomes = std::collections::BTreeSet::new();
        for seed in 0..200 {
            let f = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let p = f.predict(&[0.0]).unwrap();
            assert_eq!(p.sigma, 0.0);
            outcomes.insert(p.mu.to_bits());
        }
        let expected: std::collections::BTreeSet<u64> = [0.0f64, 1.0].iter().map(|v| v.to_bits()).collect();
        assert_eq!(outcomes, expected);
    }

    #[test]
    fn log2_feature_reduction() {
        assert_eq!(MaxFeatures::Log2.resolve(17), 4);
        assert_eq!(MaxFeatures::Log2.resolve(1), 1);
        assert_eq!(MaxFeatures::Log2.resolve(2), 1);
        assert_eq!(MaxFeatures::All.resolve(17), 17);
        assert_eq!(MaxFeatures::Count(40).resolve(17), 17);
    }

    #[test]
    fn one_tree_variance_is_leaf_variance() {
        let f = Forest::from_trees(vec![Tree::leaf(2.0, 3.5, 4)], 1);
        let p = f.predict(&[0.0]).unwrap();
        assert_eq!(p.mu, 2.0);
        assert_eq!(p.variance(), 3.5);
    }

    #[test]
    fn hand_computed_total_variance() {
        let f = Forest::from_trees(vec![Tree::leaf(1.0, 0.0, 1), Tree::leaf(3.0, 0.0, 1)], 1);
        let p = f.predict(&[0.0]).unwrap();
        assert_eq!(p.mu, 2.0);
        assert_eq!(p.variance(), 1.0);

        let f = Forest::from_trees(vec![Tree::leaf(2.0, 4.0, 1), Tree::leaf(2.0, 8.0, 1)], 1);
        let p = f.predict(&[0.0]).unwrap();
        assert_eq!(p.mu, 2.0);
        assert!((p.variance() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = Forest::from_trees(vec![Tree::leaf(0.0, 0.0, 1)], 2);
        assert!(matches!(f.predict(&[1.0]), Err(ForestError::DimensionMismatch { .. })));
        let m = FeatureMatrix::from_rows(3, vec![0.0; 6]);
        assert!(f.predict_batch(&m).is_err());
    }

    #[test]
    fn internal_nodes_route_by_threshold() {
        let tree = Tree::from_nodes(vec![
            TreeNode::Internal { feature: 1, threshold: 0.5, left: 1, right: 2 },
            TreeNode::Leaf { mu: -1.0, var: 0.0, n: 1 },
            TreeNode::Leaf { mu: 1.0, var: 0.25, n: 2 },
        ]);
        assert_eq!(tree.leaf_for(&[9.0, 0.5]), (-1.0, 0.0));
        assert_eq!(tree.leaf_for(&[9.0, 0.6]), (1.0, 0.25));
        assert_eq!(tree.n_leaves(), 2);
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let pts: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.1, (i as f64 * 0.37).sin())).collect();
        let (x, y) = one_d(&pts);
        let params = ForestParams { n_tree: 8, ..Default::default() };
        let a = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a.trees(), b.trees());
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let pts: Vec<(f64, f64)> = (0..64).map(|i| (i as f64, i as f64)).collect();
        let (x, y) = one_d(&pts);
        for rule in [SplitRule::Random, SplitRule::Best] {
            let params = ForestParams {
                n_tree: 5,
                min_samples_leaf: 4,
                split_rule: rule,
                bootstrap: false,
                ..Default::default()
            };
            let f = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            for t in f.trees() {
                for node in t.nodes() {
                    if let TreeNode::Leaf { n, var, .. } = node {
                        assert!(*n >= 4);
                        assert!(*var >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_features_are_skipped() {
        // Feature 0 is constant; only feature 1 carries signal.
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            data.extend_from_slice(&[3.0, i as f64]);
            y.push(if i < 10 { 0.0 } else { 1.0 });
        }
        let x = FeatureMatrix::from_rows(2, data);
        let params =
            ForestParams { n_tree: 20, max_features: MaxFeatures::Count(1), bootstrap: false, ..Default::default() };
        let f = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for t in f.trees() {
            assert!(t.n_leaves() >= 2);
        }
    }

    #[test]
    fn best_split_finds_the_gap() {
        let (x, y) = one_d(&[(0.0, 0.0), (1.0, 0.0), (2.0, 10.0), (3.0, 10.0)]);
        let params = ForestParams { n_tree: 1, split_rule: SplitRule::Best, bootstrap: false, ..Default::default() };
        let f = Forest::fit(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        match f.trees()[0].nodes()[0] {
            TreeNode::Internal { threshold, .. } => assert_eq!(threshold, 1.5),
            other => panic!("root should split, got {other:?}"),
        }
    }
}
