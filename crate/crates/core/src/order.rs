//! Choosing the number of lines by penalized likelihood.
//!
//! Every candidate order `L` in `1..=l_max` gets a fresh pruning-initialized
//! EM fit; the score is `-2 L(theta) + penalty(L)` and the smallest score
//! wins, with ties going to the smaller order. Each component contributes
//! four free parameters (a, b, sigma2, weight), hence the `4 L` factor in
//! every penalty.

use crate::em::{fit_em, EmConfig, EmFit};
use crate::model::Dataset;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrderError {
    #[error("l_max must be >= 1")]
    BadLmax,
    #[error("gic rho must be >= 1 and finite, got {0}")]
    BadRho(f64),
    #[error("invalid EM configuration: {0}")]
    BadConfig(String),
    #[error("no feasible order: {n} points cannot support any L in 1..={l_max}")]
    NoFeasibleOrder { n: usize, l_max: usize },
}

/// Penalized-likelihood criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Gic { rho: f64 },
}

impl Criterion {
    pub fn gic(rho: f64) -> Result<Self, OrderError> {
        if !(rho.is_finite() && rho >= 1.0) {
            return Err(OrderError::BadRho(rho));
        }
        Ok(Criterion::Gic { rho })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
            Criterion::Gic { .. } => "gic",
        }
    }
}

/// Number of free parameters of an L-component mixture of lines.
pub fn n_params(l: usize) -> usize {
    4 * l
}

/// Penalty term added to `-2 log-likelihood`.
pub fn penalty(criterion: Criterion, l: usize, n: usize) -> f64 {
    let p = n_params(l) as f64;
    match criterion {
        Criterion::Aic => 2.0 * p,
        Criterion::Gic { rho } => (1.0 + rho) * p,
        Criterion::Bic => p * (n as f64).ln(),
    }
}

/// One candidate order: either a completed fit or the reason it was skipped.
#[derive(Debug)]
pub struct OrderFit {
    pub l: usize,
    pub outcome: Result<EmFit, String>,
}

impl OrderFit {
    pub fn loglik(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|f| f.report.final_loglik())
    }
}

#[derive(Debug)]
pub struct OrderSelection {
    pub criterion: Criterion,
    pub chosen_l: usize,
    /// Score per order, index `l - 1`; infeasible orders carry +inf.
    pub scores: Vec<f64>,
    pub fits: Vec<OrderFit>,
}

impl OrderSelection {
    pub fn chosen_fit(&self) -> &EmFit {
        self.fits[self.chosen_l - 1]
            .outcome
            .as_ref()
            .expect("chosen order is feasible")
    }
}

/// Fits every order once. Orders the dataset cannot support (N < 2L) and
/// fits that abort are recorded as infeasible rather than failing the whole
/// sweep. The shared `cfg` keeps epsilon and thresholds; the iteration
/// budget still adapts to each L unless explicitly pinned.
pub fn fit_all_orders(d: &Dataset, l_max: usize, cfg: &EmConfig) -> Vec<OrderFit> {
    (1..=l_max)
        .map(|l| OrderFit {
            l,
            outcome: fit_em(d, l, cfg).map_err(|e| e.to_string()),
        })
        .collect()
}

/// Scores pre-computed fits under one criterion. Lets callers compare
/// several criteria without re-running EM, since the fits do not depend on
/// the criterion.
pub fn select_from_fits(
    fits: &[OrderFit],
    criterion: Criterion,
    n: usize,
) -> Result<(usize, Vec<f64>), OrderError> {
    if let Criterion::Gic { rho } = criterion {
        if !(rho.is_finite() && rho >= 1.0) {
            return Err(OrderError::BadRho(rho));
        }
    }
    let scores: Vec<f64> = fits
        .iter()
        .map(|f| match f.loglik() {
            Some(ll) => -2.0 * ll + penalty(criterion, f.l, n),
            None => f64::INFINITY,
        })
        .collect();
    let mut chosen = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && chosen.map_or(true, |(_, best)| s < best) {
            chosen = Some((fits[i].l, s));
        }
    }
    match chosen {
        Some((l, _)) => Ok((l, scores)),
        None => Err(OrderError::NoFeasibleOrder {
            n,
            l_max: fits.len(),
        }),
    }
}

/// Full order selection: fit all orders, then pick the penalized best.
pub fn select_order(
    d: &Dataset,
    l_max: usize,
    criterion: Criterion,
    cfg: &EmConfig,
) -> Result<OrderSelection, OrderError> {
    if l_max == 0 {
        return Err(OrderError::BadLmax);
    }
    cfg.validate()
        .map_err(|e| OrderError::BadConfig(e.to_string()))?;
    let fits = fit_all_orders(d, l_max, cfg);
    let (chosen_l, scores) = select_from_fits(&fits, criterion, d.len())?;
    Ok(OrderSelection {
        criterion,
        chosen_l,
        scores,
        fits,
    })
}
