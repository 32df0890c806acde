//! Expectation-maximization fit of the mixture of lines.
//!
//! The E-step is carried out in log space with a max shift per point, so
//! components that are hundreds of sigmas away simply underflow to a zero
//! responsibility. The M-step solves the per-component weighted least-squares
//! problem jointly for `(a, b)` via centered normal equations;
//! [`sequential_line_fit`] keeps the older two-stage update (intercept first,
//! then slope) purely as an independent cross-check — both must agree at the
//! unique minimum of the weighted quadratic loss.
//!
//! Initialization follows an iterative pruning scheme: fit one line to the
//! whole working set, peel off the floor(N/L) points that hug it best, and
//! repeat on the remainder.

use crate::model::{
    log_component_density, log_likelihood, variance_floor, ComponentParams, Dataset, Measurement,
    MixtureModel, ModelError, Responsibilities,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmError {
    #[error("need at least 2 points per component: N={n}, L={l}")]
    TooFewPoints { n: usize, l: usize },
    #[error("initialization failed at component {component}: {reason}")]
    DegenerateInit { component: usize, reason: String },
    #[error("component {component} stayed empty after re-seeding")]
    ReseedLoop { component: usize },
    #[error("invalid EM configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Why an M-step update could not produce a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MStepFailure {
    /// Effective count below threshold; nothing to fit.
    EmptyComponent,
    /// All responsibility mass sits at a single x; the slope is unidentifiable.
    DegenerateXSpread,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    /// Relative log-likelihood change below which the fit stops.
    pub epsilon: f64,
    /// Iteration budget; `None` picks 150 for L <= 5 and 250 above, which is
    /// where the averaged convergence curves flatten out on the benchmark
    /// scenarios.
    pub max_iterations: Option<usize>,
    /// A component whose responsibility mass falls below this fraction of N
    /// is considered empty and gets re-seeded.
    pub empty_threshold: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            epsilon: 1e-5,
            max_iterations: None,
            empty_threshold: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn budget(&self, l: usize) -> usize {
        self.max_iterations
            .unwrap_or(if l <= 5 { 150 } else { 250 })
    }

    pub(crate) fn validate(&self) -> Result<(), EmError> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(EmError::BadConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(EmError::BadConfig("max_iterations must be >= 1".into()));
        }
        if !(self.empty_threshold.is_finite() && self.empty_threshold >= 0.0) {
            return Err(EmError::BadConfig(format!(
                "empty_threshold must be finite and >= 0, got {}",
                self.empty_threshold
            )));
        }
        Ok(())
    }
}

/// Diagnostics of one EM run.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    /// Log-likelihood at initialization followed by one value per iteration.
    pub loglik_trace: Vec<f64>,
    /// Number of EM iterations performed.
    pub iterations: usize,
    /// True when the relative change dropped below epsilon within budget.
    pub converged: bool,
    /// Relative log-likelihood change at the last iteration.
    pub final_delta: f64,
    /// How many times a collapsed component was re-seeded.
    pub reseeds: usize,
}

impl FitReport {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace never empty")
    }
}

/// A completed fit: model, posterior responsibilities, diagnostics.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixtureModel,
    pub responsibilities: Responsibilities,
    pub report: FitReport,
}

fn ols(points: &[Measurement], idx: &[usize]) -> Option<(f64, f64)> {
    let n = idx.len() as f64;
    let xb = idx.iter().map(|&i| points[i].x).sum::<f64>() / n;
    let yb = idx.iter().map(|&i| points[i].y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &i in idx {
        let dx = points[i].x - xb;
        sxx += dx * dx;
        sxy += dx * (points[i].y - yb);
    }
    if spread_degenerate(sxx, n, xb) {
        return None;
    }
    let a = sxy / sxx;
    Some((a, yb - a * xb))
}

// sxx of truly identical x values is not exactly zero after centering, just
// rounding residue of order (eps * x)^2 per point; this threshold sits far
// above that and far below any honest spread.
fn spread_degenerate(sxx: f64, weight: f64, xb: f64) -> bool {
    !sxx.is_finite() || sxx <= 1e-24 * weight * xb.powi(2).max(1.0)
}

/// Pruning initializer. Fits a line to the current working set, discards the
/// floor(N/L) points with the smallest normalized deviation, and moves on;
/// the last component keeps whatever remains. Weights start uniform and each
/// sigma2 starts at the mean squared residual of the component's working set.
pub fn initialize(d: &Dataset, l: usize) -> Result<MixtureModel, EmError> {
    if l == 0 {
        return Err(EmError::BadConfig("L must be >= 1".into()));
    }
    let n = d.len();
    if n < 2 * l {
        return Err(EmError::TooFewPoints { n, l });
    }
    let floor = variance_floor(d.y_variance());
    let chunk = n / l;
    let points = d.points();
    let mut work: Vec<usize> = (0..n).collect();
    let mut components = Vec::with_capacity(l);

    for comp in 1..=l {
        if work.len() < 2 {
            return Err(EmError::DegenerateInit {
                component: comp,
                reason: format!("only {} points left in working set", work.len()),
            });
        }
        let (a, b) = ols(points, &work).ok_or_else(|| EmError::DegenerateInit {
            component: comp,
            reason: "all x values in the working set coincide".into(),
        })?;
        let mss = work
            .iter()
            .map(|&i| (points[i].y - a * points[i].x - b).powi(2))
            .sum::<f64>()
            / work.len() as f64;
        components.push(ComponentParams::new(a, b, mss.max(floor))?);

        if comp < l {
            // Normalized deviation from the fitted line. The denominator is
            // shared by every point, so it cannot change the pruning order;
            // fall back to the raw residual when it degenerates.
            let den = (a * a + b * b).sqrt();
            let mut dev: Vec<(f64, usize)> = work
                .iter()
                .map(|&i| {
                    let r = (points[i].y - a * points[i].x - b).abs();
                    (if den > 0.0 { r / den } else { r }, i)
                })
                .collect();
            dev.sort_unstable_by(|p, q| {
                p.0.partial_cmp(&q.0)
                    .expect("finite deviations")
                    .then(p.1.cmp(&q.1))
            });
            let pruned: Vec<usize> = dev[..chunk].iter().map(|&(_, i)| i).collect();
            work.retain(|i| !pruned.contains(i));
        }
    }

    let weights = vec![1.0 / l as f64; l];
    Ok(MixtureModel::new(components, weights)?)
}

/// Posterior responsibilities of each component for each point, computed in
/// log space with a per-point max shift. A point that underflows under every
/// component (possible only for absurdly remote data) gets a uniform row.
pub fn e_step(d: &Dataset, model: &MixtureModel) -> Responsibilities {
    let l = model.n_components();
    let n = d.len();
    let log_w: Vec<f64> = model.weights().iter().map(|&w| w.ln()).collect();
    let mut data = vec![0.0; n * l];
    let mut t = vec![0.0; l];
    let mut sorted = vec![0.0; l];

    for (i, m) in d.points().iter().enumerate() {
        for (k, c) in model.components().iter().enumerate() {
            t[k] = log_w[k] + log_component_density(m, c);
        }
        sorted.copy_from_slice(&t);
        sorted.sort_unstable_by(|p, q| p.partial_cmp(q).expect("no NaN in E-step"));
        let mx = sorted[l - 1];
        let row = &mut data[i * l..(i + 1) * l];
        if mx == f64::NEG_INFINITY {
            row.fill(1.0 / l as f64);
            continue;
        }
        // Summing in value order makes the denominator (and therefore every
        // responsibility) independent of component order.
        let denom: f64 = sorted.iter().map(|&v| (v - mx).exp()).sum();
        for k in 0..l {
            row[k] = (t[k] - mx).exp() / denom;
        }
    }
    Responsibilities::new(data, n, l).expect("rows normalized by construction")
}

/// New mixture weights: per-component mean responsibility.
pub fn m_step_weights(r: &Responsibilities) -> Vec<f64> {
    let n = r.n_points();
    let l = r.n_components();
    let mut w = vec![0.0; l];
    for i in 0..n {
        for (k, wk) in w.iter_mut().enumerate() {
            *wk += r.get(i, k);
        }
    }
    for wk in &mut w {
        *wk /= n as f64;
    }
    w
}

/// Weighted least-squares update of one component: `(a, b)` from the centered
/// 2x2 normal equations, then sigma2 as the floored weighted mean squared
/// residual.
pub fn m_step_component(
    d: &Dataset,
    r: &Responsibilities,
    l: usize,
    floor: f64,
    min_count: f64,
) -> Result<ComponentParams, MStepFailure> {
    let points = d.points();
    let mut sw = 0.0;
    for i in 0..points.len() {
        sw += r.get(i, l);
    }
    if !(sw.is_finite() && sw > 0.0) || sw < min_count {
        return Err(MStepFailure::EmptyComponent);
    }
    let mut xb = 0.0;
    let mut yb = 0.0;
    for (i, m) in points.iter().enumerate() {
        let p = r.get(i, l);
        xb += p * m.x;
        yb += p * m.y;
    }
    xb /= sw;
    yb /= sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, m) in points.iter().enumerate() {
        let p = r.get(i, l);
        let dx = m.x - xb;
        sxx += p * dx * dx;
        sxy += p * dx * (m.y - yb);
    }
    if spread_degenerate(sxx, sw, xb) {
        return Err(MStepFailure::DegenerateXSpread);
    }
    let a = sxy / sxx;
    let b = yb - a * xb;
    let mut rss = 0.0;
    for (i, m) in points.iter().enumerate() {
        let res = m.y - a * m.x - b;
        rss += r.get(i, l) * res * res;
    }
    let sigma2 = (rss / sw).max(floor);
    ComponentParams::new(a, b, sigma2).map_err(|_| MStepFailure::DegenerateXSpread)
}

/// Two-stage `(b, then a)` weighted update, written exactly in its closed
/// sequential form. It solves the same quadratic problem as
/// [`m_step_component`] and exists only so tests can confront the joint
/// solve with an independently derived route. Returns `None` when the
/// denominator degenerates.
pub fn sequential_line_fit(d: &Dataset, r: &Responsibilities, l: usize) -> Option<(f64, f64)> {
    let points = d.points();
    let p = |i: usize| r.get(i, l);
    let big_a: f64 = points.iter().enumerate().map(|(i, m)| p(i) * m.x).sum();
    let big_b: f64 = points.iter().enumerate().map(|(i, m)| p(i) * m.x * m.x).sum();
    let sxy: f64 = points
        .iter()
        .enumerate()
        .map(|(i, m)| p(i) * m.y * m.x)
        .sum();
    let num_left: f64 = points
        .iter()
        .enumerate()
        .map(|(i, m)| p(i) * m.x * (m.x * big_a - big_b))
        .sum();
    let num_right: f64 = points
        .iter()
        .enumerate()
        .map(|(i, m)| p(i) * m.y * (m.x * big_a - big_b))
        .sum();
    let den: f64 = points
        .iter()
        .enumerate()
        .map(|(i, m)| p(i) * (m.x * big_a - big_b).powi(2))
        .sum();
    if !(den.is_finite() && den > 0.0) || big_b <= 0.0 {
        return None;
    }
    let b = (num_left * sxy - num_right * big_b) / den;
    let a: f64 = points
        .iter()
        .enumerate()
        .map(|(i, m)| p(i) * (m.y - b) * m.x)
        .sum::<f64>()
        / big_b;
    Some((a, b))
}

/// Runs EM from an explicit starting model. Each iteration performs the
/// E-step, refits weights and components, and evaluates the log-likelihood;
/// the loop stops when `|L(h) - L(h-1)| / |L(h)| < epsilon` (zero likelihood
/// counts as converged) or the budget runs out.
///
/// A component that comes back empty or with degenerate x-spread is re-seeded
/// onto the point the current model explains worst (lowest maximum
/// responsibility), with sigma2 equal to the dataset y-variance and a weight
/// of 1/N before renormalization. Two re-seeds of the same component in
/// consecutive iterations abort the fit.
pub fn fit_em_from(d: &Dataset, init: MixtureModel, cfg: &EmConfig) -> Result<EmFit, EmError> {
    cfg.validate()?;
    let n = d.len();
    let l = init.n_components();
    let budget = cfg.budget(l);
    let floor = variance_floor(d.y_variance());
    let y_var = d.y_variance();
    let min_count = cfg.empty_threshold * n as f64;

    let mut model = init;
    let mut trace = Vec::with_capacity(budget + 1);
    trace.push(log_likelihood(d, &model));
    let mut converged = false;
    let mut final_delta = f64::INFINITY;
    let mut reseeds = 0usize;
    let mut reseeded_last_iter = vec![false; l];

    for _ in 1..=budget {
        let r = e_step(d, &model);
        let mut weights = m_step_weights(&r);
        let mut components = Vec::with_capacity(l);
        let mut reseeded_now = vec![false; l];

        for k in 0..l {
            match m_step_component(d, &r, k, floor, min_count) {
                Ok(c) => components.push(c),
                Err(_) => {
                    if reseeded_last_iter[k] {
                        return Err(EmError::ReseedLoop { component: k + 1 });
                    }
                    let hardest = hardest_point(&r);
                    let y = d.points()[hardest].y;
                    components.push(ComponentParams::new(0.0, y, y_var.max(floor))?);
                    weights[k] = 1.0 / n as f64;
                    reseeded_now[k] = true;
                    reseeds += 1;
                }
            }
        }
        if reseeded_now.iter().any(|&b| b) {
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
        }
        reseeded_last_iter = reseeded_now;

        model = MixtureModel::new(components, weights)?;
        let ll = log_likelihood(d, &model);
        let prev = *trace.last().expect("trace seeded");
        trace.push(ll);
        let delta = if ll == 0.0 {
            0.0
        } else {
            let v = ((ll - prev) / ll).abs();
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        final_delta = delta;
        if delta < cfg.epsilon {
            converged = true;
            break;
        }
    }

    // Responsibilities are reported for the final model, not the one that
    // produced the last M-step.
    let responsibilities = e_step(d, &model);
    let iterations = trace.len() - 1;
    Ok(EmFit {
        model,
        responsibilities,
        report: FitReport {
            loglik_trace: trace,
            iterations,
            converged,
            final_delta,
            reseeds,
        },
    })
}

/// Initializes by pruning and runs EM. See [`fit_em_from`].
pub fn fit_em(d: &Dataset, l: usize, cfg: &EmConfig) -> Result<EmFit, EmError> {
    let init = initialize(d, l)?;
    fit_em_from(d, init, cfg)
}

fn hardest_point(r: &Responsibilities) -> usize {
    let mut best = 0usize;
    let mut best_max = f64::INFINITY;
    for i in 0..r.n_points() {
        let row_max = r
            .row(i)
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &p| acc.max(p));
        if row_max < best_max {
            best_max = row_max;
            best = i;
        }
    }
    best
}
