//! The simulate / fit / select commands: thin orchestration around the
//! core library plus the report schemas they emit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lineclust_core::{
    builtin, fit_em, generate, map_assign, select_order, Criterion, Dataset, EmConfig, EmFit,
    ScenarioSpec,
};
use serde::Serialize;

use crate::io;

/// A scenario comes from either a builtin name or a JSON spec file; an
/// explicit seed overrides whatever the spec carries.
pub fn resolve_spec(
    scenario: Option<&str>,
    spec_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<(String, ScenarioSpec)> {
    let (name, spec) = match (scenario, spec_path) {
        (Some(name), None) => (name.to_string(), builtin(name)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let spec: ScenarioSpec = serde_json::from_str(&text)
                .with_context(|| format!("bad scenario spec in {}", path.display()))?;
            spec.validate()?;
            let name = path
                .file_stem()
                .map_or_else(|| "custom".to_string(), |s| s.to_string_lossy().into_owned());
            (name, spec)
        }
        (Some(_), Some(_)) => bail!("give either --scenario or --spec, not both"),
        (None, None) => bail!("one of --scenario or --spec is required"),
    };
    let spec = match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    };
    Ok((name, spec))
}

pub fn cmd_simulate(
    scenario: Option<&str>,
    spec_path: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let (_, spec) = resolve_spec(scenario, spec_path, seed)?;
    let d = generate(&spec)?;
    match out {
        Some(path) => io::save_dataset_csv(path, &d),
        None => {
            print!("{}", io::dataset_to_csv(&d));
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentJson {
    pub a: f64,
    pub b: f64,
    pub sigma2: f64,
    pub weight: f64,
}

fn components_json(fit: &EmFit) -> Vec<ComponentJson> {
    fit.model
        .components()
        .iter()
        .zip(fit.model.weights())
        .map(|(c, &w)| ComponentJson {
            a: c.a,
            b: c.b,
            sigma2: c.sigma2,
            weight: w,
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct FitReportJson {
    pub generated_at_unix: u64,
    pub input: PathBuf,
    pub l: usize,
    pub epsilon: f64,
    pub max_iterations: Option<usize>,
    pub iteration_budget: usize,
    pub components: Vec<ComponentJson>,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_delta: f64,
    pub reseeds: usize,
    pub labels: Vec<usize>,
}

pub fn em_config(epsilon: f64, max_iterations: Option<usize>) -> EmConfig {
    EmConfig {
        epsilon,
        max_iterations,
        ..EmConfig::default()
    }
}

pub fn cmd_fit(
    input: &Path,
    l: usize,
    epsilon: f64,
    max_iterations: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let d = io::load_dataset_csv(input)?;
    let cfg = em_config(epsilon, max_iterations);
    let fit = fit_em(&d, l, &cfg)
        .with_context(|| format!("fitting {} components", l))?;
    let labels = map_assign(&fit.responsibilities);
    let report = FitReportJson {
        generated_at_unix: io::unix_now(),
        input: input.to_path_buf(),
        l,
        epsilon,
        max_iterations,
        iteration_budget: cfg.budget(l),
        components: components_json(&fit),
        loglik_trace: fit.report.loglik_trace.clone(),
        converged: fit.report.converged,
        iterations: fit.report.iterations,
        final_delta: fit.report.final_delta,
        reseeds: fit.report.reseeds,
        labels: labels.labels().to_vec(),
    };
    io::emit_json(&report, out)
}

#[derive(Debug, Serialize)]
pub struct ScoreJson {
    pub l: usize,
    /// Penalized score; `null` when the fit for this order failed.
    pub score: Option<f64>,
    pub loglik: Option<f64>,
    pub converged: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct SelectReportJson {
    pub generated_at_unix: u64,
    pub input: PathBuf,
    pub criterion: String,
    /// Echoed only for GIC.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub l_max: usize,
    pub epsilon: f64,
    pub max_iterations: Option<usize>,
    pub chosen_l: usize,
    pub scores: Vec<ScoreJson>,
    pub components: Vec<ComponentJson>,
    pub converged: bool,
    pub iterations: usize,
    pub labels: Vec<usize>,
}

pub fn cmd_select(
    input: &Path,
    l_max: usize,
    criterion: Criterion,
    epsilon: f64,
    max_iterations: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let d = io::load_dataset_csv(input)?;
    let cfg = em_config(epsilon, max_iterations);
    let selection = select_order(&d, l_max, criterion, &cfg)?;
    let chosen = selection.chosen_fit();
    let labels = map_assign(&chosen.responsibilities);
    let scores = selection
        .fits
        .iter()
        .zip(&selection.scores)
        .map(|(f, &s)| ScoreJson {
            l: f.l,
            score: s.is_finite().then_some(s),
            loglik: f.loglik(),
            converged: f.outcome.as_ref().ok().map(|e| e.report.converged),
        })
        .collect();
    let report = SelectReportJson {
        generated_at_unix: io::unix_now(),
        input: input.to_path_buf(),
        criterion: criterion.name().to_string(),
        rho: match criterion {
            Criterion::Gic { rho } => Some(rho),
            _ => None,
        },
        l_max,
        epsilon,
        max_iterations,
        chosen_l: selection.chosen_l,
        scores,
        components: components_json(chosen),
        converged: chosen.report.converged,
        iterations: chosen.report.iterations,
        labels: labels.labels().to_vec(),
    };
    io::emit_json(&report, out)
}

/// Fit + MAP labels in one call; shared by bench and tests.
pub fn fit_and_label(d: &Dataset, l: usize, cfg: &EmConfig) -> Result<(EmFit, Vec<usize>)> {
    let fit = fit_em(d, l, cfg)?;
    let labels = map_assign(&fit.responsibilities).labels().to_vec();
    Ok((fit, labels))
}
