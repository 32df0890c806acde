//! Synthetic multi-target scenarios.
//!
//! Each target is a line `y = a x + b` observed `N_l` times (drawn uniformly
//! from `n_range`) at integer `x` positions sampled with replacement from
//! `1..=N`, where `N` is the realized total count of the trial. Noise is
//! Gaussian per target. The draw order is part of the format and must not
//! change: first all counts, then every target's x positions, then every
//! target's noise values — golden files and the benchmark determinism
//! guarantee depend on it.

use crate::model::{Dataset, Measurement, ModelError};
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario must contain at least one target")]
    NoTargets,
    #[error("target {index}: {what} must be finite")]
    NonFinite { index: usize, what: &'static str },
    #[error("target {index}: sigma2 must be >= 0 and finite, got {sigma2}")]
    BadSigma2 { index: usize, sigma2: f64 },
    #[error("n_range ({lo}, {hi}) invalid: need 1 <= lo <= hi")]
    BadRange { lo: usize, hi: usize },
    #[error("unknown scenario '{0}' (expected scenario1, scenario2 or scenario3)")]
    UnknownScenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One straight-line target. `sigma2 = 0` is allowed and produces noiseless
/// measurements, which is handy for golden tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetLine {
    pub a: f64,
    pub b: f64,
    pub sigma2: f64,
}

/// Everything needed to generate one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub targets: Vec<TargetLine>,
    /// Inclusive bounds for the per-target measurement count.
    pub n_range: (usize, usize),
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.targets.is_empty() {
            return Err(ScenarioError::NoTargets);
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !t.a.is_finite() {
                return Err(ScenarioError::NonFinite { index: i, what: "a" });
            }
            if !t.b.is_finite() {
                return Err(ScenarioError::NonFinite { index: i, what: "b" });
            }
            if !(t.sigma2.is_finite() && t.sigma2 >= 0.0) {
                return Err(ScenarioError::BadSigma2 {
                    index: i,
                    sigma2: t.sigma2,
                });
            }
        }
        let (lo, hi) = self.n_range;
        if lo == 0 || lo > hi {
            return Err(ScenarioError::BadRange { lo, hi });
        }
        Ok(())
    }

    /// Same scenario re-seeded, used to derive per-trial datasets.
    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn true_lines(&self) -> Vec<(f64, f64)> {
        self.targets.iter().map(|t| (t.a, t.b)).collect()
    }
}

/// Generates the dataset for a spec. Points are grouped by target, in target
/// order, with 1-based truth labels.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset, ScenarioError> {
    spec.validate()?;
    let mut rng = CounterRng::new(spec.seed);
    let (lo, hi) = spec.n_range;
    let counts: Vec<usize> = spec
        .targets
        .iter()
        .map(|_| rng.uniform_int(lo as u64, hi as u64) as usize)
        .collect();
    let n_total: usize = counts.iter().sum();

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(counts.len());
    for &c in &counts {
        xs.push(
            (0..c)
                .map(|_| rng.uniform_int(1, n_total as u64) as f64)
                .collect(),
        );
    }

    let mut points = Vec::with_capacity(n_total);
    let mut truth = Vec::with_capacity(n_total);
    for (l, target) in spec.targets.iter().enumerate() {
        let sigma = target.sigma2.sqrt();
        for &x in &xs[l] {
            let y = target.a * x + target.b + rng.normal(0.0, sigma);
            points.push(Measurement::new(x, y)?);
            truth.push(l + 1);
        }
    }
    Ok(Dataset::with_truth(points, truth)?)
}

/// The three benchmark scenarios: five well-spread lines, ten partially
/// overlapping lines, and three lines used for the order-selection study.
/// All use noise variance 50 and 60..=90 points per target.
pub fn builtin(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    let lines: &[(f64, f64)] = match name {
        "scenario1" | "1" => &[
            (-1.4826, 671.0),
            (-0.8391, 310.0),
            (0.5774, -434.0),
            (1.0, -110.0),
            (1.8040, 430.0),
        ],
        "scenario2" | "2" => &[
            (-4.0108, -4897.0),
            (14.3007, -6230.0),
            (0.0875, -2936.0),
            (-1.9626, -1774.0),
            (1.1504, 330.0),
            (-0.7265, 1997.0),
            (0.4663, 3245.0),
            (0.5774, 4588.0),
            (2.6051, 5846.0),
            (-2.4751, 6706.0),
        ],
        "scenario3" | "3" => &[(-1.8807, 771.0), (-0.2679, 410.0), (1.0, -129.0)],
        other => return Err(ScenarioError::UnknownScenario(other.to_string())),
    };
    Ok(ScenarioSpec {
        targets: lines
            .iter()
            .map(|&(a, b)| TargetLine { a, b, sigma2: 50.0 })
            .collect(),
        n_range: (60, 90),
        seed: 0,
    })
}
