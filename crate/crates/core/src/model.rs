//! Mixture-of-lines model types and densities.
//!
//! A measurement is a point `(x, y)`; a component is a line `y = a x + b`
//! with Gaussian noise of variance `sigma2`; a mixture combines `L`
//! components with weights summing to one. All probability work is done in
//! log space: per-point mixture likelihoods use a max-shifted log-sum-exp so
//! that points far from every line underflow gracefully instead of producing
//! NaN.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("dataset must contain at least one measurement")]
    EmptyDataset,
    #[error("truth labels: expected {expected} entries, got {got}")]
    TruthLength { expected: usize, got: usize },
    #[error("truth label {label} out of range 1..={max}")]
    TruthLabel { label: usize, max: usize },
    #[error("variance must be positive and finite, got {0}")]
    BadVariance(f64),
    #[error("mixture must contain at least one component")]
    EmptyMixture,
    #[error("expected {components} weights, got {got}")]
    WeightCount { components: usize, got: usize },
    #[error("weight {0} outside [0, 1]")]
    WeightRange(f64),
    #[error("weights sum to {0}, expected 1 within 1e-12")]
    WeightSum(f64),
    #[error("responsibility matrix: {rows} rows x {cols} cols does not match {len} entries")]
    RespShape { rows: usize, cols: usize, len: usize },
    #[error("responsibility {0} outside [0, 1]")]
    RespRange(f64),
    #[error("responsibility row {row} sums to {sum}, expected 1 within 1e-12")]
    RespRowSum { row: usize, sum: f64 },
}

/// One observed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub x: f64,
    pub y: f64,
}

impl Measurement {
    pub fn new(x: f64, y: f64) -> Result<Self, ModelError> {
        if !x.is_finite() {
            return Err(ModelError::NonFinite("x"));
        }
        if !y.is_finite() {
            return Err(ModelError::NonFinite("y"));
        }
        Ok(Measurement { x, y })
    }
}

/// A batch of measurements, optionally with ground-truth target labels
/// (1-based, as written in the CSV files).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Measurement>,
    truth: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(points: Vec<Measurement>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        Ok(Dataset {
            points,
            truth: None,
        })
    }

    /// Labels are 1-based and must cover `1..=max(labels)` in principle; we
    /// only validate the range here.
    pub fn with_truth(points: Vec<Measurement>, truth: Vec<usize>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        if truth.len() != points.len() {
            return Err(ModelError::TruthLength {
                expected: points.len(),
                got: truth.len(),
            });
        }
        let max = *truth.iter().max().expect("non-empty");
        for &t in &truth {
            if t == 0 {
                return Err(ModelError::TruthLabel { label: t, max });
            }
        }
        Ok(Dataset {
            points,
            truth: Some(truth),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Measurement] {
        &self.points
    }

    pub fn truth(&self) -> Option<&[usize]> {
        self.truth.as_deref()
    }

    /// Population variance of the y coordinates. Fuels the variance floor.
    pub fn y_variance(&self) -> f64 {
        let n = self.points.len() as f64;
        let mean = self.points.iter().map(|m| m.y).sum::<f64>() / n;
        self.points.iter().map(|m| (m.y - mean).powi(2)).sum::<f64>() / n
    }
}

/// Line `y = a x + b` with Gaussian residual variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub a: f64,
    pub b: f64,
    pub sigma2: f64,
}

impl ComponentParams {
    pub fn new(a: f64, b: f64, sigma2: f64) -> Result<Self, ModelError> {
        if !a.is_finite() {
            return Err(ModelError::NonFinite("a"));
        }
        if !b.is_finite() {
            return Err(ModelError::NonFinite("b"));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(ModelError::BadVariance(sigma2));
        }
        Ok(ComponentParams { a, b, sigma2 })
    }
}

/// Weighted mixture of line components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    components: Vec<ComponentParams>,
    weights: Vec<f64>,
}

impl MixtureModel {
    pub fn new(components: Vec<ComponentParams>, weights: Vec<f64>) -> Result<Self, ModelError> {
        if components.is_empty() {
            return Err(ModelError::EmptyMixture);
        }
        if weights.len() != components.len() {
            return Err(ModelError::WeightCount {
                components: components.len(),
                got: weights.len(),
            });
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
                return Err(ModelError::WeightRange(w));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::WeightSum(sum));
        }
        Ok(MixtureModel {
            components,
            weights,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComponentParams] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Row-stochastic N x L matrix of posterior component probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    data: Vec<f64>, // row-major
    n_points: usize,
    n_components: usize,
}

impl Responsibilities {
    pub fn new(data: Vec<f64>, n_points: usize, n_components: usize) -> Result<Self, ModelError> {
        if data.len() != n_points * n_components {
            return Err(ModelError::RespShape {
                rows: n_points,
                cols: n_components,
                len: data.len(),
            });
        }
        for row in 0..n_points {
            let mut sum = 0.0;
            for &p in &data[row * n_components..(row + 1) * n_components] {
                if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                    return Err(ModelError::RespRange(p));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ModelError::RespRowSum { row, sum });
            }
        }
        Ok(Responsibilities {
            data,
            n_points,
            n_components,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_components..(n + 1) * self.n_components]
    }

    pub fn get(&self, n: usize, l: usize) -> f64 {
        self.data[n * self.n_components + l]
    }
}

/// Smallest variance a component is allowed to carry, given the spread of
/// the data it is fitted to. Keeps densities finite when a component locks
/// onto perfectly collinear points.
pub fn variance_floor(y_variance: f64) -> f64 {
    (1e-9 * y_variance).max(1e-12)
}

/// Log of the Gaussian line density: `-0.5 ln(2 pi sigma2) - r^2 / (2 sigma2)`
/// with residual `r = y - a x - b`.
pub fn log_component_density(m: &Measurement, c: &ComponentParams) -> f64 {
    let r = m.y - c.a * m.x - c.b;
    -0.5 * (2.0 * std::f64::consts::PI * c.sigma2).ln() - r * r / (2.0 * c.sigma2)
}

/// Max-shifted log-sum-exp. Terms are summed smallest-first, which also
/// makes the result independent of the order the caller stored them in.
/// Returns -inf for an all-(-inf) input.
pub(crate) fn log_sum_exp(terms: &mut [f64]) -> f64 {
    debug_assert!(!terms.is_empty());
    terms.sort_unstable_by(|p, q| p.partial_cmp(q).expect("no NaN in log-sum-exp"));
    let m = terms[terms.len() - 1];
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + sum.ln()
}

/// Total log-likelihood of the dataset under the mixture.
pub fn log_likelihood(d: &Dataset, model: &MixtureModel) -> f64 {
    let l = model.n_components();
    let mut terms = vec![0.0; l];
    let log_w: Vec<f64> = model.weights().iter().map(|&w| w.ln()).collect();
    let mut total = 0.0;
    for m in d.points() {
        for (k, c) in model.components().iter().enumerate() {
            terms[k] = log_w[k] + log_component_density(m, c);
        }
        total += log_sum_exp(&mut terms);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(x: f64, y: f64) -> Measurement {
        Measurement::new(x, y).unwrap()
    }

    fn comp(a: f64, b: f64, s2: f64) -> ComponentParams {
        ComponentParams::new(a, b, s2).unwrap()
    }

    #[test]
    fn rejects_non_finite_inputs() {
        assert!(Measurement::new(f64::NAN, 0.0).is_err());
        assert!(Measurement::new(0.0, f64::INFINITY).is_err());
        assert!(ComponentParams::new(1.0, 0.0, 0.0).is_err());
        assert!(ComponentParams::new(1.0, 0.0, -1.0).is_err());
        assert!(ComponentParams::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert_eq!(Dataset::new(vec![]).unwrap_err(), ModelError::EmptyDataset);
        let pts = vec![meas(0.0, 0.0), meas(1.0, 1.0)];
        assert!(Dataset::with_truth(pts.clone(), vec![1]).is_err());
        assert!(Dataset::with_truth(pts.clone(), vec![1, 0]).is_err());
        let d = Dataset::with_truth(pts, vec![1, 2]).unwrap();
        assert_eq!(d.truth().unwrap(), &[1, 2]);
    }

    #[test]
    fn mixture_validation() {
        let c = comp(0.0, 0.0, 1.0);
        assert!(MixtureModel::new(vec![], vec![]).is_err());
        assert!(MixtureModel::new(vec![c], vec![0.5, 0.5]).is_err());
        assert!(MixtureModel::new(vec![c, c], vec![0.7, 0.7]).is_err());
        assert!(MixtureModel::new(vec![c, c], vec![-0.1, 1.1]).is_err());
        assert!(MixtureModel::new(vec![c, c], vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn responsibilities_validation() {
        assert!(Responsibilities::new(vec![0.5; 3], 2, 2).is_err());
        assert!(Responsibilities::new(vec![0.9, 0.2, 0.5, 0.5], 2, 2).is_err());
        assert!(Responsibilities::new(vec![1.5, -0.5, 0.5, 0.5], 2, 2).is_err());
        let r = Responsibilities::new(vec![0.25, 0.75, 1.0, 0.0], 2, 2).unwrap();
        assert_eq!(r.row(1), &[1.0, 0.0]);
        assert_eq!(r.get(0, 1), 0.75);
    }

    #[test]
    fn density_normalizing_constant_cancels() {
        // sigma2 = 1/(2 pi) makes the normalizer vanish at the line.
        let c = comp(0.0, 0.0, 1.0 / (2.0 * std::f64::consts::PI));
        let v = log_component_density(&meas(0.0, 0.0), &c);
        assert!(v.abs() < 1e-15, "got {v}");
    }

    #[test]
    fn density_on_line_is_pure_normalizer() {
        // Point on y = 2x + 1, variance 4: density is -0.5 ln(8 pi).
        let v = log_component_density(&meas(1.0, 3.0), &comp(2.0, 1.0, 4.0));
        let expected = -0.5 * (8.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-15, "got {v}, want {expected}");
    }

    #[test]
    fn density_off_line() {
        // Residual -3, unit variance: -0.5 ln(2 pi) - 4.5.
        let v = log_component_density(&meas(2.0, 0.0), &comp(1.0, 1.0, 1.0));
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - 4.5;
        assert!((v - expected).abs() < 1e-15, "got {v}, want {expected}");
    }

    #[test]
    fn density_peaks_on_the_line() {
        let c = comp(0.7, -2.0, 3.0);
        for i in 0..50 {
            let x = -5.0 + 0.4 * i as f64;
            let on = log_component_density(&meas(x, c.a * x + c.b), &c);
            for delta in [1e-3, -1e-3, 0.5, -0.5] {
                let off = log_component_density(&meas(x, c.a * x + c.b + delta), &c);
                assert!(off < on);
            }
        }
    }

    #[test]
    fn single_component_loglik_is_density() {
        let d = Dataset::new(vec![meas(1.0, 2.0)]).unwrap();
        let c = comp(1.0, 0.5, 2.0);
        let model = MixtureModel::new(vec![c], vec![1.0]).unwrap();
        let expected = log_component_density(&meas(1.0, 2.0), &c);
        assert_eq!(log_likelihood(&d, &model), expected);
    }

    #[test]
    fn duplicate_components_collapse() {
        let d = Dataset::new(vec![meas(1.0, 2.0)]).unwrap();
        let c = comp(1.0, 0.5, 2.0);
        let model = MixtureModel::new(vec![c, c], vec![0.5, 0.5]).unwrap();
        let expected = log_component_density(&meas(1.0, 2.0), &c);
        assert!((log_likelihood(&d, &model) - expected).abs() < 1e-14);
    }

    #[test]
    fn matches_naive_summation() {
        // Direct (non-log) evaluation as an independent route.
        let pts = vec![meas(1.0, 0.3), meas(2.0, -1.1), meas(5.5, 4.2)];
        let d = Dataset::new(pts.clone()).unwrap();
        let cs = [comp(0.8, -0.2, 1.7), comp(-1.2, 3.0, 0.4)];
        let ws = [0.3, 0.7];
        let model = MixtureModel::new(cs.to_vec(), ws.to_vec()).unwrap();

        let mut naive = 0.0;
        for m in &pts {
            let mut px = 0.0;
            for (c, w) in cs.iter().zip(ws) {
                let norm = 1.0 / (2.0 * std::f64::consts::PI * c.sigma2).sqrt();
                let r = m.y - c.a * m.x - c.b;
                px += w * norm * (-r * r / (2.0 * c.sigma2)).exp();
            }
            naive += px.ln();
        }
        let ll = log_likelihood(&d, &model);
        assert!(
            (ll - naive).abs() <= 1e-12 * naive.abs(),
            "lse {ll} vs naive {naive}"
        );
    }

    #[test]
    fn far_point_underflows_to_finite_value() {
        let d = Dataset::new(vec![meas(1.0, 1e8)]).unwrap();
        let model = MixtureModel::new(
            vec![comp(0.0, 0.0, 1.0), comp(1.0, 0.0, 2.0)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let ll = log_likelihood(&d, &model);
        assert!(ll.is_finite() && ll < -1e12, "got {ll}");
    }

    #[test]
    fn loglik_invariant_under_component_permutation() {
        let d = Dataset::new(vec![meas(0.0, 1.0), meas(2.0, 2.5), meas(-3.0, 0.1)]).unwrap();
        let c1 = comp(0.5, 1.0, 0.9);
        let c2 = comp(-0.3, 2.0, 2.5);
        let c3 = comp(1.5, -1.0, 1.1);
        let m = MixtureModel::new(vec![c1, c2, c3], vec![0.2, 0.5, 0.3]).unwrap();
        let p = MixtureModel::new(vec![c3, c1, c2], vec![0.3, 0.2, 0.5]).unwrap();
        // Bitwise equal: per-point log-sum-exp sums in value order.
        assert_eq!(log_likelihood(&d, &m), log_likelihood(&d, &p));
    }

    #[test]
    fn zero_weight_component_is_ignored() {
        let d = Dataset::new(vec![meas(1.0, 2.0)]).unwrap();
        let c = comp(1.0, 1.0, 1.0);
        let junk = comp(50.0, -90.0, 0.01);
        let with = MixtureModel::new(vec![c, junk], vec![1.0, 0.0]).unwrap();
        let without = MixtureModel::new(vec![c], vec![1.0]).unwrap();
        assert_eq!(log_likelihood(&d, &with), log_likelihood(&d, &without));
    }

    #[test]
    fn variance_floor_scales() {
        assert_eq!(variance_floor(0.0), 1e-12);
        assert_eq!(variance_floor(1e6), 1e-3);
        assert!(variance_floor(1.0) >= 1e-12);
    }
}
