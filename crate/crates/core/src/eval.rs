//! Clustering metrics: label matching, consistency, per-target error,
//! parameter RMSE.
//!
//! Cluster indices carry no meaning, so every comparison against ground
//! truth first finds the injective cluster-to-target mapping that maximizes
//! the number of agreeing points (an assignment problem over the
//! contingency table, solved exactly by bitmask dynamic programming).
//! Labels are 1-based throughout, matching the CSV files.

use crate::model::Responsibilities;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("labeling must be non-empty")]
    Empty,
    #[error("labels are 1-based; found 0")]
    ZeroLabel,
    #[error("labelings differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("{k} clusters exceed the supported maximum of {max}")]
    TooManyClusters { k: usize, max: usize },
    #[error("no trials to aggregate")]
    NoTrials,
    #[error("trial {trial} contributed no fitted components")]
    EmptyTrial { trial: usize },
    #[error("no true targets given")]
    NoTargets,
}

/// 1-based cluster labels for a batch of points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling(Vec<usize>);

impl Labeling {
    pub fn new(labels: Vec<usize>) -> Result<Self, EvalError> {
        if labels.is_empty() {
            return Err(EvalError::Empty);
        }
        if labels.iter().any(|&l| l == 0) {
            return Err(EvalError::ZeroLabel);
        }
        Ok(Labeling(labels))
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest label in use.
    pub fn n_clusters(&self) -> usize {
        *self.0.iter().max().expect("non-empty")
    }
}

/// Injective map from predicted clusters to true targets, maximizing
/// agreements. Entries are `None` for clusters left unmatched (always the
/// case for some when the counts differ).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatching {
    /// `pred_to_truth[p - 1]` is the true target assigned to predicted
    /// cluster `p`, 1-based.
    pub pred_to_truth: Vec<Option<usize>>,
    pub agreements: usize,
}

/// Hard assignment: each point goes to its highest-responsibility component,
/// ties to the lowest index. Labels are 1-based.
pub fn map_assign(r: &Responsibilities) -> Labeling {
    let labels = (0..r.n_points())
        .map(|i| {
            let row = r.row(i);
            let mut best = 0usize;
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = k;
                }
            }
            best + 1
        })
        .collect();
    Labeling::new(labels).expect("non-empty, 1-based by construction")
}

const MAX_MATCH_CLUSTERS: usize = 20;

/// Optimal injective matching of predicted clusters to true targets.
pub fn match_labels(pred: &Labeling, truth: &Labeling) -> Result<LabelMatching, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            a: pred.len(),
            b: truth.len(),
        });
    }
    let kp = pred.n_clusters();
    let kt = truth.n_clusters();
    if kt > MAX_MATCH_CLUSTERS {
        return Err(EvalError::TooManyClusters {
            k: kt,
            max: MAX_MATCH_CLUSTERS,
        });
    }
    let mut counts = vec![vec![0usize; kt]; kp];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        counts[p - 1][t - 1] += 1;
    }

    // best[i][mask] = max agreements from predicted clusters i.. with the
    // truth set `mask` still available.
    let full = (1usize << kt) - 1;
    let mut best = vec![vec![0usize; full + 1]; kp + 1];
    for i in (0..kp).rev() {
        for mask in 0..=full {
            let mut v = best[i + 1][mask]; // leave cluster i unmatched
            let mut avail = mask;
            while avail != 0 {
                let t = avail.trailing_zeros() as usize;
                avail &= avail - 1;
                v = v.max(counts[i][t] + best[i + 1][mask & !(1 << t)]);
            }
            best[i][mask] = v;
        }
    }

    let mut pred_to_truth = vec![None; kp];
    let mut mask = full;
    for i in 0..kp {
        let target = best[i][mask];
        let mut picked = None;
        for t in 0..kt {
            if mask & (1 << t) != 0 && counts[i][t] + best[i + 1][mask & !(1 << t)] == target {
                picked = Some(t);
                break;
            }
        }
        if let Some(t) = picked {
            pred_to_truth[i] = Some(t + 1);
            mask &= !(1 << t);
        }
    }
    Ok(LabelMatching {
        pred_to_truth,
        agreements: best[0][full],
    })
}

/// Percentage of points whose matched cluster agrees with their true target.
pub fn consistency(pred: &Labeling, truth: &Labeling) -> Result<f64, EvalError> {
    let m = match_labels(pred, truth)?;
    Ok(100.0 * m.agreements as f64 / truth.len() as f64)
}

/// Per-target misclassification percentage, indexed by target label minus
/// one. A target with no points (possible only for hand-built labelings)
/// reports NaN.
pub fn per_target_error(pred: &Labeling, truth: &Labeling) -> Result<Vec<f64>, EvalError> {
    let m = match_labels(pred, truth)?;
    let kt = truth.n_clusters();
    let mut total = vec![0usize; kt];
    let mut correct = vec![0usize; kt];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        total[t - 1] += 1;
        if m.pred_to_truth[p - 1] == Some(t) {
            correct[t - 1] += 1;
        }
    }
    Ok((0..kt)
        .map(|t| {
            if total[t] == 0 {
                f64::NAN
            } else {
                100.0 * (1.0 - correct[t] as f64 / total[t] as f64)
            }
        })
        .collect())
}

/// Root-mean-square parameter error for one true value, as a percentage of
/// its magnitude when it is nonzero, absolute otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRmse {
    pub value: f64,
    /// True if `value` is a percentage of the true parameter; false means
    /// the true parameter was zero and `value` is the raw RMSE.
    pub percent: bool,
}

/// Per-target RMSE of slope and intercept estimates across trials, each
/// trial contributing its best-matching fitted component (independently for
/// a and b). Returns one entry per true target, for a then b.
pub fn prmse(
    fitted_per_trial: &[Vec<(f64, f64)>],
    truth: &[(f64, f64)],
) -> Result<(Vec<ParamRmse>, Vec<ParamRmse>), EvalError> {
    if fitted_per_trial.is_empty() {
        return Err(EvalError::NoTrials);
    }
    if truth.is_empty() {
        return Err(EvalError::NoTargets);
    }
    for (i, trial) in fitted_per_trial.iter().enumerate() {
        if trial.is_empty() {
            return Err(EvalError::EmptyTrial { trial: i });
        }
    }
    let n_trials = fitted_per_trial.len() as f64;
    let mut out_a = Vec::with_capacity(truth.len());
    let mut out_b = Vec::with_capacity(truth.len());
    for &(ta, tb) in truth {
        let mut mse_a = 0.0;
        let mut mse_b = 0.0;
        for trial in fitted_per_trial {
            let da = trial
                .iter()
                .map(|&(fa, _)| (ta - fa) * (ta - fa))
                .fold(f64::INFINITY, f64::min);
            let db = trial
                .iter()
                .map(|&(_, fb)| (tb - fb) * (tb - fb))
                .fold(f64::INFINITY, f64::min);
            mse_a += da;
            mse_b += db;
        }
        out_a.push(relative_rmse((mse_a / n_trials).sqrt(), ta));
        out_b.push(relative_rmse((mse_b / n_trials).sqrt(), tb));
    }
    Ok((out_a, out_b))
}

fn relative_rmse(rmse: f64, reference: f64) -> ParamRmse {
    if reference == 0.0 {
        ParamRmse {
            value: rmse,
            percent: false,
        }
    } else {
        ParamRmse {
            value: 100.0 * rmse / reference.abs(),
            percent: true,
        }
    }
}

/// Root-mean-square error of estimated component counts across trials.
pub fn rmse_count(estimates: &[usize], true_l: usize) -> Result<f64, EvalError> {
    if estimates.is_empty() {
        return Err(EvalError::NoTrials);
    }
    let mse = estimates
        .iter()
        .map(|&e| {
            let d = e as f64 - true_l as f64;
            d * d
        })
        .sum::<f64>()
        / estimates.len() as f64;
    Ok(mse.sqrt())
}

/// Aggregated benchmark metrics for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub consistency_percent: f64,
    pub per_target_error_percent: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prmse_a: Option<Vec<ParamRmse>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prmse_b: Option<Vec<ParamRmse>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_l: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn lab(v: &[usize]) -> Labeling {
        Labeling::new(v.to_vec()).unwrap()
    }

    #[test]
    fn labeling_validation() {
        assert_eq!(Labeling::new(vec![]).unwrap_err(), EvalError::Empty);
        assert_eq!(Labeling::new(vec![1, 0]).unwrap_err(), EvalError::ZeroLabel);
        assert_eq!(lab(&[1, 3, 2]).n_clusters(), 3);
    }

    #[test]
    fn map_assign_takes_argmax_with_low_index_ties() {
        let r = Responsibilities::new(
            vec![
                0.1, 0.9, //
                0.5, 0.5, //
                1.0, 0.0,
            ],
            3,
            2,
        )
        .unwrap();
        assert_eq!(map_assign(&r).labels(), &[2, 1, 1]);
    }

    #[test]
    fn matching_identity_and_swap() {
        let truth = lab(&[1, 1, 2, 2]);
        let same = match_labels(&truth, &truth).unwrap();
        assert_eq!(same.agreements, 4);
        assert_eq!(same.pred_to_truth, vec![Some(1), Some(2)]);

        let swapped = lab(&[2, 2, 1, 1]);
        let m = match_labels(&swapped, &truth).unwrap();
        assert_eq!(m.agreements, 4);
        assert_eq!(m.pred_to_truth, vec![Some(2), Some(1)]);
    }

    #[test]
    fn matching_extra_prediction_left_unmatched() {
        let truth = lab(&[1, 1, 1, 2, 2, 2]);
        let pred = lab(&[1, 1, 3, 2, 2, 3]);
        let m = match_labels(&pred, &truth).unwrap();
        assert_eq!(m.agreements, 4);
        assert_eq!(m.pred_to_truth[0], Some(1));
        assert_eq!(m.pred_to_truth[1], Some(2));
        assert_eq!(m.pred_to_truth[2], None);
    }

    // exhaustive search over injective assignments, for cross-checking
    fn brute_force_agreements(pred: &Labeling, truth: &Labeling) -> usize {
        let kp = pred.n_clusters();
        let kt = truth.n_clusters();
        let mut counts = vec![vec![0usize; kt]; kp];
        for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
            counts[p - 1][t - 1] += 1;
        }
        fn go(i: usize, used: &mut Vec<bool>, counts: &[Vec<usize>]) -> usize {
            if i == counts.len() {
                return 0;
            }
            let mut best = go(i + 1, used, counts); // skip
            for t in 0..used.len() {
                if !used[t] {
                    used[t] = true;
                    best = best.max(counts[i][t] + go(i + 1, used, counts));
                    used[t] = false;
                }
            }
            best
        }
        go(0, &mut vec![false; kt], &counts)
    }

    #[test]
    fn matching_agrees_with_brute_force() {
        let mut rng = CounterRng::new(2024);
        for trial in 0..200 {
            let kp = 1 + (rng.next_u64() % 5) as usize;
            let kt = 1 + (rng.next_u64() % 5) as usize;
            let n = 5 + (rng.next_u64() % 30) as usize;
            let pred = lab(&(0..n)
                .map(|_| 1 + (rng.next_u64() % kp as u64) as usize)
                .collect::<Vec<_>>());
            let truth = lab(&(0..n)
                .map(|_| 1 + (rng.next_u64() % kt as u64) as usize)
                .collect::<Vec<_>>());
            let m = match_labels(&pred, &truth).unwrap();
            let bf = brute_force_agreements(&pred, &truth);
            assert_eq!(m.agreements, bf, "trial {trial}");
        }
    }

    #[test]
    fn consistency_values() {
        let truth = lab(&[1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
        assert_eq!(consistency(&truth, &truth).unwrap(), 100.0);
        let swapped = lab(&[2, 2, 2, 2, 2, 1, 1, 1, 1, 1]);
        assert_eq!(consistency(&swapped, &truth).unwrap(), 100.0);
        // best matching: cluster1 -> target1 (4 pts), cluster2 -> target2 (3)
        let pred = lab(&[1, 1, 1, 1, 2, 2, 2, 2, 1, 1]);
        assert_eq!(consistency(&pred, &truth).unwrap(), 70.0);
    }

    #[test]
    fn consistency_invariant_under_cluster_relabeling() {
        let mut rng = CounterRng::new(7);
        for _ in 0..100 {
            let n = 20 + (rng.next_u64() % 30) as usize;
            let k = 2 + (rng.next_u64() % 4) as usize;
            let truth = lab(&(0..n)
                .map(|_| 1 + (rng.next_u64() % k as u64) as usize)
                .collect::<Vec<_>>());
            let pred_raw: Vec<usize> = (0..n)
                .map(|_| 1 + (rng.next_u64() % k as u64) as usize)
                .collect();
            // rotate labels
            let rotated: Vec<usize> = pred_raw.iter().map(|&p| (p % k) + 1).collect();
            let c1 = consistency(&lab(&pred_raw), &truth).unwrap();
            let c2 = consistency(&lab(&rotated), &truth).unwrap();
            assert_eq!(c1, c2);
            assert!((0.0..=100.0).contains(&c1));
        }
    }

    #[test]
    fn per_target_errors() {
        let truth = lab(&[1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
        assert_eq!(per_target_error(&truth, &truth).unwrap(), vec![0.0, 0.0]);
        let pred = lab(&[1, 1, 1, 1, 2, 2, 2, 2, 1, 1]);
        let e = per_target_error(&pred, &truth).unwrap();
        assert!((e[0] - 20.0).abs() < 1e-12);
        assert!((e[1] - 40.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            consistency(&lab(&[1, 2]), &lab(&[1, 2, 1])),
            Err(EvalError::LengthMismatch { a: 2, b: 3 })
        ));
    }

    #[test]
    fn prmse_perfect_estimates() {
        let truth = vec![(2.0, -5.0), (0.5774, 100.0)];
        let trials = vec![truth.clone(), truth.clone(), truth.clone()];
        let (a, b) = prmse(&trials, &truth).unwrap();
        for p in a.iter().chain(&b) {
            assert_eq!(p.value, 0.0);
            assert!(p.percent);
        }
    }

    #[test]
    fn prmse_single_trial_hand_value() {
        // one trial, fitted slope off by 0.2 of a true 2.0: 10 percent
        let truth = vec![(2.0, 10.0)];
        let trials = vec![vec![(2.2, 10.0)]];
        let (a, b) = prmse(&trials, &truth).unwrap();
        assert!((a[0].value - 10.0).abs() < 1e-12);
        assert_eq!(b[0].value, 0.0);
    }

    #[test]
    fn prmse_takes_best_component_per_trial() {
        let truth = vec![(1.0, 0.0)];
        // second fitted component is spot-on; min picks it
        let trials = vec![vec![(5.0, 40.0), (1.0, 0.0)]];
        let (a, _) = prmse(&trials, &truth).unwrap();
        assert_eq!(a[0].value, 0.0);
        // extra junk components can never hurt
        let more = vec![vec![(5.0, 40.0), (1.0, 0.0), (-3.0, 7.0)]];
        let (a2, _) = prmse(&more, &truth).unwrap();
        assert!(a2[0].value <= a[0].value);
    }

    #[test]
    fn prmse_zero_truth_falls_back_to_absolute() {
        let truth = vec![(0.0, 5.0)];
        let trials = vec![vec![(0.3, 5.0)]];
        let (a, b) = prmse(&trials, &truth).unwrap();
        assert!(!a[0].percent);
        assert!((a[0].value - 0.3).abs() < 1e-12);
        assert!(b[0].percent);
    }

    #[test]
    fn prmse_rejects_empty_input() {
        assert_eq!(prmse(&[], &[(1.0, 2.0)]).unwrap_err(), EvalError::NoTrials);
        assert_eq!(
            prmse(&[vec![]], &[(1.0, 2.0)]).unwrap_err(),
            EvalError::EmptyTrial { trial: 0 }
        );
        assert_eq!(
            prmse(&[vec![(1.0, 2.0)]], &[]).unwrap_err(),
            EvalError::NoTargets
        );
    }

    #[test]
    fn rmse_count_values() {
        assert_eq!(rmse_count(&[3, 3, 3], 3).unwrap(), 0.0);
        assert_eq!(rmse_count(&[2, 4], 3).unwrap(), 1.0);
        let half = rmse_count(&[3, 4], 3).unwrap();
        assert!((half - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse_count(&[], 3).unwrap_err(), EvalError::NoTrials);
    }
}
