//! Monte-Carlo benchmark: run every requested method on freshly generated
//! datasets, one derived seed per trial, then fold the per-trial records
//! into an aggregate report plus plot-data CSVs.
//!
//! Trials execute in parallel but aggregation is an ordered fold by trial
//! index, so worker count never changes a single output byte.

use std::ops::Range;
use std::path::Path;

use anyhow::{Context, Result};
use lineclust_core::{
    consistency, fit_all_orders, fit_em, generate, kmeans, knn, map_assign, per_target_error,
    prmse, rmse_count, select_from_fits, stratified_split, CounterRng, Criterion, Dataset,
    EmConfig, EmFit, KMeansConfig, KnnConfig, Labeling, MetricsReport, OrderFit, ScenarioSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::io;

/// Seed-stream tags so each baseline draws from its own substream.
const KMEANS_TAG: u64 = 0xB01;
const SPLIT_TAG: u64 = 0xB02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// EM mixture fit with the true number of lines.
    Em,
    /// Lloyd K-means with K set to the true number of lines.
    Kmeans,
    /// Supervised KNN trained on a stratified labeled subset.
    Knn,
    /// EM over all orders, order chosen by AIC.
    MosAic,
    /// EM over all orders, order chosen by BIC.
    MosBic,
    /// EM over all orders, order chosen by GIC.
    MosGic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Em => "em",
            Method::Kmeans => "kmeans",
            Method::Knn => "knn",
            Method::MosAic => "mos-aic",
            Method::MosBic => "mos-bic",
            Method::MosGic => "mos-gic",
        }
    }

    pub fn criterion(self, rho: f64) -> Option<Criterion> {
        match self {
            Method::MosAic => Some(Criterion::Aic),
            Method::MosBic => Some(Criterion::Bic),
            Method::MosGic => Some(Criterion::Gic { rho }),
            _ => None,
        }
    }

    fn is_mos(self) -> bool {
        self.criterion(2.0).is_some()
    }
}

#[derive(Debug, Clone)]
pub struct BenchContext {
    pub scenario: String,
    pub spec: ScenarioSpec,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub base_seed: u64,
    pub l_max: usize,
    pub rho: f64,
    pub em: EmConfig,
    /// 0 = use all available cores.
    pub workers: usize,
    pub knn: KnnConfig,
}

impl BenchContext {
    fn needs_mos(&self) -> bool {
        self.methods.iter().any(|m| m.is_mos())
    }
}

/// Everything one method produced in one trial.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub labels: Vec<usize>,
    pub consistency: f64,
    pub per_target_error: Vec<f64>,
    /// `(a, b)` per fitted component; absent for baselines.
    pub fitted_lines: Option<Vec<(f64, f64)>>,
    pub iterations: Option<usize>,
    pub chosen_l: Option<usize>,
    /// Relative log-likelihood change per iteration.
    pub delta_trace: Option<Vec<f64>>,
    /// Criterion score per candidate order (may hold infinities).
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub outcome: Result<MethodResult, String>,
}

/// Relative change of consecutive log-likelihood values, mirroring the
/// fit's own stopping rule.
pub fn delta_series(trace: &[f64]) -> Vec<f64> {
    trace
        .windows(2)
        .map(|w| {
            let den = w[1].abs();
            if den == 0.0 {
                0.0
            } else {
                (w[1] - w[0]).abs() / den
            }
        })
        .collect()
}

fn em_result(fit: &EmFit, chosen_l: Option<usize>, scores: Option<Vec<f64>>, truth: &Labeling)
    -> Result<MethodResult, String>
{
    let labels = map_assign(&fit.responsibilities);
    let cons = consistency(&labels, truth).map_err(|e| e.to_string())?;
    let per_target = per_target_error(&labels, truth).map_err(|e| e.to_string())?;
    let lines = fit.model.components().iter().map(|c| (c.a, c.b)).collect();
    Ok(MethodResult {
        labels: labels.labels().to_vec(),
        consistency: cons,
        per_target_error: per_target,
        fitted_lines: Some(lines),
        iterations: Some(fit.report.iterations),
        chosen_l,
        delta_trace: Some(delta_series(&fit.report.loglik_trace)),
        scores,
    })
}

fn eval_method(
    ctx: &BenchContext,
    method: Method,
    d: &Dataset,
    truth: &Labeling,
    trial_seed: u64,
    mos_fits: Option<&[OrderFit]>,
) -> Result<MethodResult, String> {
    let true_l = ctx.spec.targets.len();
    match method {
        Method::Em => {
            let fit = fit_em(d, true_l, &ctx.em).map_err(|e| e.to_string())?;
            em_result(&fit, None, None, truth)
        }
        Method::Kmeans => {
            let seed = CounterRng::derive(trial_seed, KMEANS_TAG);
            let fit = kmeans(d, &KMeansConfig::new(true_l, seed)).map_err(|e| e.to_string())?;
            let cons = consistency(&fit.labeling, truth).map_err(|e| e.to_string())?;
            let per_target = per_target_error(&fit.labeling, truth).map_err(|e| e.to_string())?;
            Ok(MethodResult {
                labels: fit.labeling.labels().to_vec(),
                consistency: cons,
                per_target_error: per_target,
                fitted_lines: None,
                iterations: Some(fit.iterations),
                chosen_l: None,
                delta_trace: None,
                scores: None,
            })
        }
        Method::Knn => {
            let seed = CounterRng::derive(trial_seed, SPLIT_TAG);
            let (train_idx, test_idx) =
                stratified_split(d, ctx.knn.train_fraction, seed).map_err(|e| e.to_string())?;
            let truth_all = truth.labels();
            let train: Vec<_> = train_idx
                .iter()
                .map(|&i| (d.points()[i], truth_all[i]))
                .collect();
            let test: Vec<_> = test_idx.iter().map(|&i| d.points()[i]).collect();
            let pred = knn(&train, &test, ctx.knn.k).map_err(|e| e.to_string())?;
            let test_truth = Labeling::new(test_idx.iter().map(|&i| truth_all[i]).collect())
                .map_err(|e| e.to_string())?;
            let cons = consistency(&pred, &test_truth).map_err(|e| e.to_string())?;
            let per_target =
                per_target_error(&pred, &test_truth).map_err(|e| e.to_string())?;
            Ok(MethodResult {
                labels: pred.labels().to_vec(),
                consistency: cons,
                per_target_error: per_target,
                fitted_lines: None,
                iterations: None,
                chosen_l: None,
                delta_trace: None,
                scores: None,
            })
        }
        Method::MosAic | Method::MosBic | Method::MosGic => {
            let fits = mos_fits.expect("mos fits computed when a mos method is requested");
            let criterion = method.criterion(ctx.rho).expect("mos method");
            let (chosen_l, scores) =
                select_from_fits(fits, criterion, d.len()).map_err(|e| e.to_string())?;
            let fit = fits[chosen_l - 1]
                .outcome
                .as_ref()
                .map_err(|e| e.clone())?;
            em_result(fit, Some(chosen_l), Some(scores), truth)
        }
    }
}

fn run_trial(ctx: &BenchContext, trial: usize) -> Vec<TrialRecord> {
    let trial_seed = ctx.base_seed.wrapping_add(trial as u64);
    let spec = ctx.spec.with_seed(trial_seed);
    let d = match generate(&spec) {
        Ok(d) => d,
        Err(e) => {
            return ctx
                .methods
                .iter()
                .map(|&method| TrialRecord {
                    trial,
                    method,
                    outcome: Err(format!("scenario generation: {e}")),
                })
                .collect();
        }
    };
    let truth = Labeling::new(d.truth().expect("generated data is labeled").to_vec())
        .expect("labels are 1-based");
    let mos_fits = ctx
        .needs_mos()
        .then(|| fit_all_orders(&d, ctx.l_max, &ctx.em));
    ctx.methods
        .iter()
        .map(|&method| TrialRecord {
            trial,
            method,
            outcome: eval_method(ctx, method, &d, &truth, trial_seed, mos_fits.as_deref()),
        })
        .collect()
}

/// Runs `range` of trial indices, each on its derived seed. Records come
/// back sorted by trial index regardless of scheduling.
pub fn run_trials(ctx: &BenchContext, range: Range<usize>) -> Result<Vec<TrialRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.workers)
        .build()
        .context("building worker pool")?;
    let nested: Vec<Vec<TrialRecord>> =
        pool.install(|| range.into_par_iter().map(|t| run_trial(ctx, t)).collect());
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScoreCurvePoint {
    pub l: usize,
    /// Mean criterion score over the trials where this order was feasible.
    pub mean_score: Option<f64>,
    pub feasible_trials: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub trials_succeeded: usize,
    pub trials_failed: usize,
    pub failure_reasons: Vec<String>,
    pub metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iterations: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_chosen_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_curve: Option<Vec<ScoreCurvePoint>>,
    /// Average relative log-likelihood change at iteration h (1-based),
    /// averaged over the trials still running at h.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_curve: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchReport {
    pub generated_at_unix: u64,
    pub scenario: String,
    pub trials: usize,
    pub failed_trials: usize,
    pub base_seed: u64,
    pub epsilon: f64,
    pub max_iterations: Option<usize>,
    pub l_max: usize,
    pub rho: f64,
    pub knn_k: usize,
    pub knn_train_fraction: f64,
    pub scenario_spec: ScenarioSpec,
    pub true_l: usize,
    pub methods: Vec<MethodReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        if v.is_finite() {
            sum += v;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn aggregate_method(ctx: &BenchContext, method: Method, records: &[&TrialRecord]) -> MethodReport {
    let ok: Vec<&MethodResult> = records
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .collect();
    let mut failure_reasons: Vec<String> = records
        .iter()
        .filter_map(|r| r.outcome.as_ref().err().cloned())
        .collect();
    failure_reasons.sort();
    failure_reasons.dedup();

    let true_l = ctx.spec.targets.len();
    let consistency_percent = mean(ok.iter().map(|r| r.consistency)).unwrap_or(f64::NAN);
    let per_target_error_percent: Vec<f64> = (0..true_l)
        .map(|t| {
            mean(
                ok.iter()
                    .filter_map(|r| r.per_target_error.get(t).copied()),
            )
            .unwrap_or(f64::NAN)
        })
        .collect();

    let (prmse_a, prmse_b) = if ok.iter().any(|r| r.fitted_lines.is_some()) {
        let fitted: Vec<Vec<(f64, f64)>> = ok
            .iter()
            .filter_map(|r| r.fitted_lines.clone())
            .collect();
        match prmse(&fitted, &ctx.spec.true_lines()) {
            Ok((a, b)) => (Some(a), Some(b)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };

    let chosen: Vec<usize> = ok.iter().filter_map(|r| r.chosen_l).collect();
    let rmse_l = (!chosen.is_empty())
        .then(|| rmse_count(&chosen, true_l).expect("true_l >= 1"));
    let mean_chosen_l = mean(chosen.iter().map(|&l| l as f64));

    let mean_iterations = mean(ok.iter().filter_map(|r| r.iterations).map(|i| i as f64));

    let score_curve = ok.iter().any(|r| r.scores.is_some()).then(|| {
        (1..=ctx.l_max)
            .map(|l| {
                let at_l = ok
                    .iter()
                    .filter_map(|r| r.scores.as_ref())
                    .filter_map(|s| s.get(l - 1).copied())
                    .filter(|s| s.is_finite());
                let feasible = ok
                    .iter()
                    .filter_map(|r| r.scores.as_ref())
                    .filter_map(|s| s.get(l - 1))
                    .filter(|s| s.is_finite())
                    .count();
                ScoreCurvePoint {
                    l,
                    mean_score: mean(at_l),
                    feasible_trials: feasible,
                }
            })
            .collect()
    });

    let delta_curve = ok.iter().any(|r| r.delta_trace.is_some()).then(|| {
        let traces: Vec<&Vec<f64>> = ok.iter().filter_map(|r| r.delta_trace.as_ref()).collect();
        let longest = traces.iter().map(|t| t.len()).max().unwrap_or(0);
        (0..longest)
            .map(|h| mean(traces.iter().filter_map(|t| t.get(h).copied())).unwrap_or(f64::NAN))
            .collect()
    });

    MethodReport {
        method: method.name().to_string(),
        trials_succeeded: ok.len(),
        trials_failed: records.len() - ok.len(),
        failure_reasons,
        metrics: MetricsReport {
            consistency_percent,
            per_target_error_percent,
            prmse_a,
            prmse_b,
            rmse_l,
        },
        mean_iterations,
        mean_chosen_l,
        score_curve,
        delta_curve,
    }
}

/// Deterministic ordered fold of trial records into the final report.
/// Feeding it the concatenation of two half-runs gives the same report as
/// one full run.
pub fn aggregate(ctx: &BenchContext, records: &[TrialRecord]) -> BenchReport {
    let methods = ctx
        .methods
        .iter()
        .map(|&m| {
            let mut mine: Vec<&TrialRecord> =
                records.iter().filter(|r| r.method == m).collect();
            mine.sort_by_key(|r| r.trial);
            aggregate_method(ctx, m, &mine)
        })
        .collect();
    let mut failed: Vec<usize> = records
        .iter()
        .filter(|r| r.outcome.is_err())
        .map(|r| r.trial)
        .collect();
    failed.sort_unstable();
    failed.dedup();
    BenchReport {
        generated_at_unix: io::unix_now(),
        scenario: ctx.scenario.clone(),
        trials: ctx.trials,
        failed_trials: failed.len(),
        base_seed: ctx.base_seed,
        epsilon: ctx.em.epsilon,
        max_iterations: ctx.em.max_iterations,
        l_max: ctx.l_max,
        rho: ctx.rho,
        knn_k: ctx.knn.k,
        knn_train_fraction: ctx.knn.train_fraction,
        scenario_spec: ctx.spec.clone(),
        true_l: ctx.spec.targets.len(),
        methods,
    }
}

pub fn run_bench(ctx: &BenchContext) -> Result<BenchReport> {
    let records = run_trials(ctx, 0..ctx.trials)?;
    Ok(aggregate(ctx, &records))
}

fn csv_cell(v: f64) -> String {
    if v.is_finite() {
        io::fmt_f64(v)
    } else {
        String::new()
    }
}

/// Writes `report.json` plus the plot-data CSVs into `dir`.
pub fn write_outputs(report: &BenchReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))?;
    io::emit_json(report, Some(&dir.join("report.json")))?;

    // consistency bar data: one row per method
    let mut cons = String::from("method,mean_consistency_percent\n");
    for m in &report.methods {
        cons.push_str(&format!(
            "{},{}\n",
            m.method,
            csv_cell(m.metrics.consistency_percent)
        ));
    }
    std::fs::write(dir.join("fig5_consistency.csv"), cons)?;

    // averaged convergence curves: iteration column + one column per method
    let with_curves: Vec<&MethodReport> = report
        .methods
        .iter()
        .filter(|m| m.delta_curve.is_some())
        .collect();
    if !with_curves.is_empty() {
        let longest = with_curves
            .iter()
            .map(|m| m.delta_curve.as_ref().expect("filtered").len())
            .max()
            .unwrap_or(0);
        let mut out = String::from("iteration");
        for m in &with_curves {
            out.push(',');
            out.push_str(&format!("mean_delta_loglik_{}", m.method));
        }
        out.push('\n');
        for h in 0..longest {
            out.push_str(&(h + 1).to_string());
            for m in &with_curves {
                out.push(',');
                if let Some(&v) = m.delta_curve.as_ref().expect("filtered").get(h) {
                    out.push_str(&csv_cell(v));
                }
            }
            out.push('\n');
        }
        std::fs::write(dir.join("fig2_deltaL.csv"), out)?;
    }

    // parameter-recovery table: one row per (method, target)
    let with_prmse: Vec<&MethodReport> = report
        .methods
        .iter()
        .filter(|m| m.metrics.prmse_a.is_some())
        .collect();
    if !with_prmse.is_empty() {
        let mut out = String::from("method,target,prmse_a,a_unit,prmse_b,b_unit\n");
        for m in &with_prmse {
            let a = m.metrics.prmse_a.as_ref().expect("filtered");
            let b = m.metrics.prmse_b.as_ref().expect("filtered");
            for (t, (ra, rb)) in a.iter().zip(b).enumerate() {
                let unit = |p: bool| if p { "percent" } else { "absolute" };
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    m.method,
                    t + 1,
                    csv_cell(ra.value),
                    unit(ra.percent),
                    csv_cell(rb.value),
                    unit(rb.percent),
                ));
            }
        }
        std::fs::write(dir.join("table1_prmse.csv"), out)?;
    }

    // order-selection error: one row per MOS method
    let with_rmse: Vec<&MethodReport> = report
        .methods
        .iter()
        .filter(|m| m.metrics.rmse_l.is_some())
        .collect();
    if !with_rmse.is_empty() {
        let mut out = String::from("method,rmse_l\n");
        for m in &with_rmse {
            out.push_str(&format!(
                "{},{}\n",
                m.method,
                csv_cell(m.metrics.rmse_l.expect("filtered"))
            ));
        }
        std::fs::write(dir.join("fig11_rmseL.csv"), out)?;
    }
    Ok(())
}
