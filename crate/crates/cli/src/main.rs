use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lineclust_cli::bench::{self, BenchContext, Method};
use lineclust_cli::{commands, em_config};
use lineclust_core::{Criterion, KnnConfig};

#[derive(Parser)]
#[command(
    name = "lineclust",
    about = "Cluster 2-D measurements into straight-line trajectories",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
    Gic,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset CSV from a scenario.
    Simulate {
        /// Builtin scenario name (scenario1, scenario2, scenario3).
        #[arg(long)]
        scenario: Option<String>,
        /// JSON scenario spec file (alternative to --scenario).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the seed carried by the scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a fixed number of lines to a dataset CSV.
    Fit {
        input: PathBuf,
        /// Number of lines to fit.
        #[arg(long = "L")]
        l: usize,
        /// Relative log-likelihood change that counts as converged.
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        /// Iteration cap; defaults to 150 (up to 5 lines) or 250 (more).
        #[arg(long)]
        max_iter: Option<usize>,
        /// Output JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every order up to a cap and pick one by an information criterion.
    Select {
        input: PathBuf,
        /// Largest order to try.
        #[arg(long)]
        lmax: usize,
        #[arg(long, value_enum)]
        criterion: CriterionArg,
        /// GIC penalty multiplier (ignored for AIC/BIC).
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo benchmark of methods over freshly generated datasets.
    Bench {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Base seed; trial t uses base + t.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated list of methods to run.
        #[arg(
            long,
            value_enum,
            value_delimiter = ',',
            default_values_t = [Method::Em, Method::Kmeans, Method::Knn]
        )]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Largest order tried by the mos-* methods.
        #[arg(long, default_value_t = 10)]
        lmax: usize,
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Output directory for report.json and plot CSVs.
        #[arg(long)]
        out: PathBuf,
    },
}

fn criterion_from(arg: CriterionArg, rho: f64) -> Result<Criterion> {
    Ok(match arg {
        CriterionArg::Aic => Criterion::Aic,
        CriterionArg::Bic => Criterion::Bic,
        CriterionArg::Gic => Criterion::gic(rho)?,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate {
            scenario,
            spec,
            seed,
            out,
        } => commands::cmd_simulate(scenario.as_deref(), spec.as_deref(), seed, out.as_deref()),
        Cmd::Fit {
            input,
            l,
            epsilon,
            max_iter,
            out,
        } => commands::cmd_fit(&input, l, epsilon, max_iter, out.as_deref()),
        Cmd::Select {
            input,
            lmax,
            criterion,
            rho,
            epsilon,
            max_iter,
            out,
        } => {
            let criterion = criterion_from(criterion, rho)?;
            commands::cmd_select(&input, lmax, criterion, epsilon, max_iter, out.as_deref())
        }
        Cmd::Bench {
            scenario,
            spec,
            seed,
            methods,
            trials,
            lmax,
            rho,
            epsilon,
            max_iter,
            workers,
            out,
        } => {
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            if methods.is_empty() {
                bail!("--methods must name at least one method");
            }
            let (name, scenario_spec) =
                commands::resolve_spec(scenario.as_deref(), spec.as_deref(), Some(seed))?;
            let ctx = BenchContext {
                scenario: name,
                spec: scenario_spec,
                methods,
                trials,
                base_seed: seed,
                l_max: lmax,
                rho,
                em: em_config(epsilon, max_iter),
                workers,
                knn: KnnConfig::default(),
            };
            let report = bench::run_bench(&ctx)?;
            bench::write_outputs(&report, &out)?;
            let budget = ctx.trials / 20; // 5% failure budget
            if report.failed_trials > budget {
                bail!(
                    "{} of {} trials failed (budget {})",
                    report.failed_trials,
                    ctx.trials,
                    budget
                );
            }
            eprintln!(
                "bench: {} trials, {} failed, report in {}",
                ctx.trials,
                report.failed_trials,
                out.display()
            );
            Ok(())
        }
    }
}
