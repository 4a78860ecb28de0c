//! Mixed-type search spaces: continuous, integer and categorical dimensions.
//!
//! Configurations are encoded for the surrogate with one numeric feature per
//! dimension. Categorical values are encoded by their ordinal index, so the
//! feature count always equals the number of dimensions.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum consecutive rejections tolerated per draw when a constraint is set.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("dimension `{name}`: {reason}")]
    InvalidDimension { name: String, reason: String },
    #[error("a search space needs at least one dimension")]
    Empty,
    #[error("configuration has {got} values, space has {expected} dimensions")]
    Arity { expected: usize, got: usize },
    #[error("value {value} is outside dimension `{name}`")]
    OutOfDomain { name: String, value: String },
    #[error("feature vector has length {got}, expected {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("failed to read space file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse space file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prior {
    #[default]
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DimensionKind {
    Continuous { low: f64, high: f64 },
    Integer { low: i64, high: i64 },
    Categorical { categories: Vec<String> },
}

/// One axis of the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    name: String,
    kind: DimensionKind,
    prior: Prior,
}

impl Dimension {
    pub fn continuous(name: impl Into<String>, low: f64, high: f64) -> Result<Self, SpaceError> {
        Self::new(name, DimensionKind::Continuous { low, high }, Prior::Uniform)
    }

    pub fn log_continuous(name: impl Into<String>, low: f64, high: f64) -> Result<Self, SpaceError> {
        Self::new(name, DimensionKind::Continuous { low, high }, Prior::LogUniform)
    }

    pub fn integer(name: impl Into<String>, low: i64, high: i64) -> Result<Self, SpaceError> {
        Self::new(name, DimensionKind::Integer { low, high }, Prior::Uniform)
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Result<Self, SpaceError> {
        let categories = categories.into_iter().map(Into::into).collect();
        Self::new(name, DimensionKind::Categorical { categories }, Prior::Uniform)
    }

    /// Validates the dimension invariants and builds it.
    pub fn new(name: impl Into<String>, kind: DimensionKind, prior: Prior) -> Result<Self, SpaceError> {
        let name = name.into();
        let invalid = |reason: &str| SpaceError::InvalidDimension { name: name.clone(), reason: reason.to_string() };
        match &kind {
            DimensionKind::Continuous { low, high } => {
                if !low.is_finite() || !high.is_finite() {
                    return Err(invalid("bounds must be finite"));
                }
                if low >= high {
                    return Err(invalid("low must be strictly below high"));
                }
                if prior == Prior::LogUniform && *low <= 0.0 {
                    return Err(invalid("log-uniform prior requires low > 0"));
                }
            }
            DimensionKind::Integer { low, high } => {
                if low >= high {
                    return Err(invalid("low must be strictly below high"));
                }
                if prior == Prior::LogUniform && *low <= 0 {
                    return Err(invalid("log-uniform prior requires low > 0"));
                }
            }
            DimensionKind::Categorical { categories } => {
                if categories.len() < 2 {
                    return Err(invalid("needs at least two categories"));
                }
                for (i, c) in categories.iter().enumerate() {
                    if categories[..i].contains(c) {
                        return Err(invalid(&format!("duplicate category `{c}`")));
                    }
                }
                if prior != Prior::Uniform {
                    return Err(invalid("categorical dimensions only support the uniform prior"));
                }
            }
        }
        Ok(Self { name, kind, prior })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &DimensionKind {
        &self.kind
    }

    pub fn prior(&self) -> Prior {
        self.prior
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match (&self.kind, self.prior) {
            (DimensionKind::Continuous { low, high }, Prior::Uniform) => {
                ParamValue::Real(rng.random_range(*low..=*high))
            }
            (DimensionKind::Continuous { low, high }, Prior::LogUniform) => {
                let v = rng.random_range(low.ln()..=high.ln()).exp();
                ParamValue::Real(v.clamp(*low, *high))
            }
            (DimensionKind::Integer { low, high }, Prior::Uniform) => {
                ParamValue::Integer(rng.random_range(*low..=*high))
            }
            (DimensionKind::Integer { low, high }, Prior::LogUniform) => {
                let v = rng.random_range((*low as f64).ln()..=(*high as f64).ln()).exp();
                ParamValue::Integer((v.round() as i64).clamp(*low, *high))
            }
            (DimensionKind::Categorical { categories }, _) => {
                ParamValue::Categorical(rng.random_range(0..categories.len()))
            }
        }
    }

    fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (DimensionKind::Continuous { low, high }, ParamValue::Real(v)) => v.is_finite() && low <= v && v <= high,
            (DimensionKind::Integer { low, high }, ParamValue::Integer(v)) => low <= v && v <= high,
            (DimensionKind::Categorical { categories }, ParamValue::Categorical(i)) => *i < categories.len(),
            _ => false,
        }
    }

    fn encode(&self, value: &ParamValue) -> f64 {
        match value {
            ParamValue::Real(v) => *v,
            ParamValue::Integer(v) => *v as f64,
            ParamValue::Categorical(i) => *i as f64,
        }
    }

    fn decode(&self, feature: f64) -> ParamValue {
        match &self.kind {
            DimensionKind::Continuous { .. } => ParamValue::Real(feature),
            DimensionKind::Integer { .. } => ParamValue::Integer(feature.round() as i64),
            DimensionKind::Categorical { .. } => ParamValue::Categorical(feature.round() as usize),
        }
    }

    fn render(&self, value: &ParamValue) -> String {
        match (&self.kind, value) {
            (DimensionKind::Categorical { categories }, ParamValue::Categorical(i)) => {
                categories.get(*i).cloned().unwrap_or_else(|| format!("#{i}"))
            }
            (_, v) => v.to_string(),
        }
    }
}

/// A single coordinate of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamValue {
    Real(f64),
    Integer(i64),
    /// Index into the dimension's category list.
    Categorical(usize),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Integer(v) => write!(f, "{v}"),
            ParamValue::Categorical(i) => write!(f, "#{i}"),
        }
    }
}

/// A point of the search space, one value per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub values: Vec<ParamValue>,
}

impl Config {
    pub fn new(values: Vec<ParamValue>) -> Self {
        Self { values }
    }

    /// Convenience constructor for all-continuous spaces.
    pub fn reals(values: &[f64]) -> Self {
        Self { values: values.iter().map(|&v| ParamValue::Real(v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-major matrix of encoded configurations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    width: usize,
}

impl FeatureMatrix {
    pub fn with_width(width: usize) -> Self {
        Self { data: Vec::new(), width }
    }

    pub fn from_rows(width: usize, data: Vec<f64>) -> Self {
        assert!(width > 0 && data.len().is_multiple_of(width), "ragged feature matrix");
        Self { data, width }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.width, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// User predicate for algebraic feasibility constraints, applied by rejection.
pub type Constraint = Arc<dyn Fn(&Config) -> bool + Send + Sync>;

/// The feasible set: an ordered list of dimensions plus an optional constraint.
#[derive(Clone)]
pub struct ParamSpace {
    dims: Vec<Dimension>,
    constraint: Option<Constraint>,
}

impl fmt::Debug for ParamSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSpace").field("dims", &self.dims).field("constrained", &self.constraint.is_some()).finish()
    }
}

impl ParamSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, SpaceError> {
        if dims.is_empty() {
            return Err(SpaceError::Empty);
        }
        Ok(Self { dims, constraint: None })
    }

    /// Box `[low, high]^dim` of continuous uniform dimensions named `x0, x1, ...`.
    pub fn uniform_box(bounds: &[(f64, f64)]) -> Result<Self, SpaceError> {
        let dims = bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| Dimension::continuous(format!("x{i}"), lo, hi))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dims)
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = Some(constraint);
        self
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn n_dims(&self) -> usize {
        self.dims.len()
    }

    /// Draws `n` independent configurations, each dimension from its prior.
    ///
    /// # Panics
    ///
    /// Panics if a constraint rejects 100,000 consecutive draws, which means
    /// the constrained region is empty or vanishingly small.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Config> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        for _ in 0..MAX_REJECTIONS {
            let x = Config::new(self.dims.iter().map(|d| d.sample(rng)).collect());
            match &self.constraint {
                Some(feasible) if !feasible(&x) => continue,
                _ => return x,
            }
        }
        panic!("search-space constraint rejected {MAX_REJECTIONS} consecutive draws");
    }

    /// Same draws as [`ParamSpace::sample`], already encoded.
    pub fn sample_encoded<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> FeatureMatrix {
        let mut out = FeatureMatrix::with_width(self.n_dims());
        out.data.reserve(n * self.n_dims());
        if self.constraint.is_some() {
            for x in self.sample(n, rng) {
                for (d, v) in self.dims.iter().zip(&x.values) {
                    out.data.push(d.encode(v));
                }
            }
        } else {
            for _ in 0..n {
                for d in &self.dims {
                    let v = d.sample(rng);
                    out.data.push(d.encode(&v));
                }
            }
        }
        out
    }

    pub fn validate(&self, x: &Config) -> Result<(), SpaceError> {
        if x.len() != self.n_dims() {
            return Err(SpaceError::Arity { expected: self.n_dims(), got: x.len() });
        }
        for (d, v) in self.dims.iter().zip(&x.values) {
            if !d.contains(v) {
                return Err(SpaceError::OutOfDomain { name: d.name.clone(), value: v.to_string() });
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &Config) -> bool {
        self.validate(x).is_ok() && self.constraint.as_ref().is_none_or(|c| c(x))
    }

    /// Encodes a configuration as one feature per dimension.
    pub fn encode(&self, x: &Config) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_dims());
        self.dims.iter().zip(&x.values).map(|(d, v)| d.encode(v)).collect()
    }

    pub fn encode_into(&self, x: &Config, out: &mut FeatureMatrix) {
        debug_assert_eq!(out.width, self.n_dims());
        out.data.extend(self.dims.iter().zip(&x.values).map(|(d, v)| d.encode(v)));
    }

    pub fn decode(&self, features: &[f64]) -> Result<Config, SpaceError> {
        if features.len() != self.n_dims() {
            return Err(SpaceError::FeatureWidth { expected: self.n_dims(), got: features.len() });
        }
        let x = Config::new(self.dims.iter().zip(features).map(|(d, &f)| d.decode(f)).collect());
        self.validate(&x)?;
        Ok(x)
    }

    /// Human-readable value of coordinate `i` (category labels instead of indices).
    pub fn render_value(&self, i: usize, value: &ParamValue) -> String {
        self.dims[i].render(value)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SpaceError> {
        let file: SpaceFile = toml::from_str(s)?;
        file.into_space()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SpaceError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk space definition:
///
/// ```toml
/// [[dimension]]
/// name = "learning_rate"
/// kind = "continuous"      # continuous | integer | categorical
/// low = 1e-5
/// high = 1e-2
/// prior = "log-uniform"    # uniform (default) | log-uniform
///
/// [[dimension]]
/// name = "activation"
/// kind = "categorical"
/// categories = ["relu", "tanh", "elu"]
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    dimension: Vec<DimensionEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimensionEntry {
    name: String,
    kind: EntryKind,
    low: Option<f64>,
    high: Option<f64>,
    categories: Option<Vec<String>>,
    #[serde(default)]
    prior: Prior,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum EntryKind {
    Continuous,
    Integer,
    Categorical,
}

impl SpaceFile {
    fn into_space(self) -> Result<ParamSpace, SpaceError> {
        let dims = self
            .dimension
            .into_iter()
            .map(|e| {
                let missing = |what: &str| SpaceError::InvalidDimension {
                    name: e.name.clone(),
                    reason: format!("missing `{what}`"),
                };
                let kind = match e.kind {
                    EntryKind::Continuous => DimensionKind::Continuous {
                        low: e.low.ok_or_else(|| missing("low"))?,
                        high: e.high.ok_or_else(|| missing("high"))?,
                    },
                    EntryKind::Integer => {
                        let low = e.low.ok_or_else(|| missing("low"))?;
                        let high = e.high.ok_or_else(|| missing("high"))?;
                        if low.fract() != 0.0 || high.fract() != 0.0 {
                            return Err(SpaceError::InvalidDimension {
                                name: e.name.clone(),
                                reason: "integer bounds must be whole numbers".into(),
                            });
                        }
                        DimensionKind::Integer { low: low as i64, high: high as i64 }
                    }
                    EntryKind::Categorical => DimensionKind::Categorical {
                        categories: e.categories.clone().ok_or_else(|| missing("categories"))?,
                    },
                };
                Dimension::new(e.name, kind, e.prior)
            })
            .collect::<Result<Vec<_>, _>>()?;
        ParamSpace::new(dims)
    }
}
