//! Benchmark functions and the evaluation-time emulator.
//!
//! Formulas and default domains follow the standard optimization test-function
//! catalog. Every benchmark is a minimization problem.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::space::{Config, ParamSpace, ParamValue};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BenchError {
    #[error("unknown benchmark `{0}`")]
    Unknown(String),
    #[error("{name} does not support dimension {dim}")]
    Dimension { name: &'static str, dim: usize },
    #[error("expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("coordinate {index} = {value} is outside [{low}, {high}]")]
    OutOfBounds { index: usize, value: f64, low: f64, high: f64 },
    #[error("benchmarks take continuous coordinates only")]
    NotReal,
    #[error("invalid runtime emulator: {0}")]
    Emulator(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Ackley,
    Griewank,
    Levy,
    Schwefel,
    Hartmann6d,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 5] = [
        BenchmarkKind::Ackley,
        BenchmarkKind::Griewank,
        BenchmarkKind::Levy,
        BenchmarkKind::Schwefel,
        BenchmarkKind::Hartmann6d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Ackley => "ackley",
            BenchmarkKind::Griewank => "griewank",
            BenchmarkKind::Levy => "levy",
            BenchmarkKind::Schwefel => "schwefel",
            BenchmarkKind::Hartmann6d => "hartmann6d",
        }
    }

    /// Per-coordinate default domain.
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            BenchmarkKind::Ackley => (-32.768, 32.768),
            BenchmarkKind::Griewank => (-600.0, 600.0),
            BenchmarkKind::Levy => (-10.0, 10.0),
            BenchmarkKind::Schwefel => (-500.0, 500.0),
            BenchmarkKind::Hartmann6d => (0.0, 1.0),
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| BenchError::Unknown(s.to_string()))
    }
}

const SCHWEFEL_OPT: f64 = 420.968_746;

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
const HARTMANN_XOPT: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
const HARTMANN_FOPT: f64 = -3.32237;

/// A test function on a box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    kind: BenchmarkKind,
    dim: usize,
    bounds: Vec<(f64, f64)>,
}

impl Benchmark {
    /// Benchmark on its default domain.
    pub fn new(kind: BenchmarkKind, dim: usize) -> Result<Self, BenchError> {
        let bad_dim = dim == 0 || (kind == BenchmarkKind::Hartmann6d && dim != 6);
        if bad_dim {
            return Err(BenchError::Dimension { name: kind.name(), dim });
        }
        Ok(Self { kind, dim, bounds: vec![kind.default_bounds(); dim] })
    }

    pub fn by_name(name: &str, dim: usize) -> Result<Self, BenchError> {
        Self::new(name.parse()?, dim)
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Continuous search space named `x0..x{d-1}`.
    pub fn space(&self) -> ParamSpace {
        ParamSpace::uniform_box(&self.bounds).expect("benchmark bounds are valid")
    }

    /// Catalog global minimizer and minimum.
    pub fn optimum(&self) -> (Vec<f64>, f64) {
        let d = self.dim;
        match self.kind {
            BenchmarkKind::Ackley | BenchmarkKind::Griewank => (vec![0.0; d], 0.0),
            BenchmarkKind::Levy => (vec![1.0; d], 0.0),
            BenchmarkKind::Schwefel => (vec![SCHWEFEL_OPT; d], 0.0),
            BenchmarkKind::Hartmann6d => (HARTMANN_XOPT.to_vec(), HARTMANN_FOPT),
        }
    }

    pub fn evaluate(&self, x: &Config) -> Result<f64, BenchError> {
        let coords = x
            .values
            .iter()
            .map(|v| match v {
                ParamValue::Real(r) => Ok(*r),
                ParamValue::Integer(i) => Ok(*i as f64),
                ParamValue::Categorical(_) => Err(BenchError::NotReal),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        self.evaluate_point(&coords)
    }

    pub fn evaluate_point(&self, x: &[f64]) -> Result<f64, BenchError> {
        if x.len() != self.dim {
            return Err(BenchError::Arity { expected: self.dim, got: x.len() });
        }
        for (index, (&value, &(low, high))) in x.iter().zip(&self.bounds).enumerate() {
            if !(low..=high).contains(&value) {
                return Err(BenchError::OutOfBounds { index, value, low, high });
            }
        }
        Ok(self.evaluate_unchecked(x))
    }

    /// Function value without the domain check.
    pub fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            BenchmarkKind::Ackley => ackley(x),
            BenchmarkKind::Griewank => griewank(x),
            BenchmarkKind::Levy => levy(x),
            BenchmarkKind::Schwefel => schwefel(x),
            BenchmarkKind::Hartmann6d => hartmann6(x),
        }
    }
}

pub fn ackley(x: &[f64]) -> f64 {
    let (a, b, c) = (20.0, 0.2, 2.0 * PI);
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cos = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
    -a * (-b * sq.sqrt()).exp() - cos.exp() + a + E
}

pub fn griewank(x: &[f64]) -> f64 {
    let sum = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let prod: f64 = x.iter().enumerate().map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos()).product();
    sum - prod + 1.0
}

pub fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let last = w[w.len() - 1];
    let head = (PI * w[0]).sin().powi(2);
    let mid: f64 =
        w[..w.len() - 1].iter().map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2))).sum();
    let tail = (last - 1.0).powi(2) * (1.0 + (2.0 * PI * last).sin().powi(2));
    head + mid + tail
}

pub fn schwefel(x: &[f64]) -> f64 {
    418.9829 * x.len() as f64 - x.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>()
}

pub fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

/// Draws black-box evaluation durations as `max(floor, N(mean, sd))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeEmulator {
    pub mean: f64,
    pub sd: f64,
    pub floor: f64,
}

impl Default for RuntimeEmulator {
    fn default() -> Self {
        Self { mean: 60.0, sd: 20.0, floor: 1.0 }
    }
}

impl RuntimeEmulator {
    pub fn new(mean: f64, sd: f64, floor: f64) -> Result<Self, BenchError> {
        let e = Self { mean, sd, floor };
        e.validate()?;
        Ok(e)
    }

    pub fn constant(duration: f64) -> Self {
        Self { mean: duration, sd: 0.0, floor: duration.min(1.0) }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(BenchError::Emulator("floor must be positive"));
        }
        if !(self.sd >= 0.0 && self.sd.is_finite() && self.mean.is_finite()) {
            return Err(BenchError::Emulator("mean and sd must be finite, sd non-negative"));
        }
        Ok(())
    }

    /// Same distribution with every time divided by `factor`.
    pub fn compressed(&self, factor: f64) -> Self {
        Self { mean: self.mean / factor, sd: self.sd / factor, floor: self.floor / factor }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let raw =
            if self.sd == 0.0 { self.mean } else { Normal::new(self.mean, self.sd).expect("validated sd").sample(rng) };
        raw.max(self.floor)
    }
}
