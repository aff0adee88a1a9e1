//! Batch command-line surface: run simulation studies, estimate from CSV
//! data, and compute convergence-rate diagnostics.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error. The
//! worker count is taken from SUBMANIFOLD_WORKERS (default: available
//! parallelism); results are independent of it.

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;
use submanifold::{
    empirical_rate_of, estimate, fit_sieve, report, sieve_dimension_warning, unit_weight,
    BoxDomain, ChartManifold, Dgp, Error, FunctionalSpec, Sample, StudySettings,
    TensorSplineBasis,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "submanifold",
    about = "Plug-in estimation of integral functionals on submanifolds",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo simulation study and write its report
    Simulate(SimulateArgs),
    /// Estimate a functional from sample data in CSV form
    Estimate(EstimateArgs),
    /// Convergence-rate diagnostic on a study report CSV
    Rates(RatesArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Data-generating process: `circle` or `disk`
    #[arg(long)]
    dgp: String,
    /// Comma-separated sample sizes, e.g. 500,1000,2000
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Monte Carlo replications per sample size (at least 2)
    #[arg(long)]
    reps: usize,
    /// Master seed; replication seeds are derived from it
    #[arg(long)]
    seed: u64,
    /// Report CSV path (stdout when omitted); a .meta.json sidecar is
    /// written next to it
    #[arg(long)]
    out: Option<PathBuf>,
    /// Total sieve size K (default 36 for circle, 64 for disk)
    #[arg(long)]
    k: Option<usize>,
    /// Band half-width for upper-contour standard errors
    #[arg(long)]
    epsilon: Option<f64>,
    /// Evaluation node count override
    #[arg(long)]
    nodes: Option<usize>,
    /// Band node count override
    #[arg(long)]
    band_nodes: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample CSV with header x1,...,xd,y
    #[arg(long)]
    data: PathBuf,
    /// Functional configuration JSON (see README)
    #[arg(long)]
    config: PathBuf,
    /// Total sieve size K
    #[arg(long)]
    k: Option<usize>,
    /// Confidence level in (0, 1)
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Band half-width for upper-contour standard errors
    #[arg(long)]
    epsilon: Option<f64>,
    /// Evaluation node count override
    #[arg(long)]
    nodes: Option<usize>,
    /// Band node count override
    #[arg(long)]
    band_nodes: Option<usize>,
}

#[derive(Args)]
struct RatesArgs {
    /// Study report CSV (the output of `simulate`)
    #[arg(long)]
    report: PathBuf,
    /// Smoothness order s for the theoretical reference rate
    #[arg(long, requires_all = ["dim", "manifold_dim"])]
    smoothness: Option<usize>,
    /// Ambient dimension d
    #[arg(long, requires_all = ["smoothness", "manifold_dim"])]
    dim: Option<usize>,
    /// Manifold dimension m
    #[arg(long, requires_all = ["smoothness", "dim"])]
    manifold_dim: Option<usize>,
}

/// Functional selection for `estimate`: a built-in target plus the covariate
/// domain box of the data.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionalConfig {
    functional: String,
    domain_lower: Vec<f64>,
    domain_upper: Vec<f64>,
}

struct CliFailure {
    code: u8,
    message: String,
}

impl CliFailure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

/// Usage/config errors exit 2, runtime failures exit 1.
impl From<Error> for CliFailure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::InvalidArgument(_) | Error::Csv(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_workers() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Rates(args) => cmd_rates(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_workers() -> Result<(), CliFailure> {
    if let Ok(raw) = std::env::var("SUBMANIFOLD_WORKERS") {
        let workers: usize = raw
            .parse()
            .ok()
            .filter(|&w| w >= 1)
            .ok_or_else(|| {
                CliFailure::usage(format!(
                    "SUBMANIFOLD_WORKERS must be a positive integer, got `{raw}`"
                ))
            })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliFailure::runtime(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliFailure> {
    let dgp = Dgp::parse(&args.dgp)?;
    if args.reps < 2 {
        return Err(CliFailure::usage("--reps must be at least 2"));
    }
    if args.n.is_empty() || args.n.contains(&0) {
        return Err(CliFailure::usage("--n needs positive sample sizes"));
    }
    let settings = StudySettings {
        k: args.k,
        epsilon: args.epsilon,
        eval_points: args.nodes,
        band_points: args.band_nodes,
    };
    let k = settings.total_basis_count(dgp);
    for &n in &args.n {
        if sieve_dimension_warning(k, n) {
            eprintln!("warning: K log K = {:.0} exceeds n = {n}; the sieve may be too rich for this sample size", (k as f64) * (k as f64).ln());
        }
    }
    let report = submanifold::run_study(dgp, &args.n, args.reps, args.seed, &settings)?;
    let csv = report::study_csv_string(&report);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| CliFailure::runtime(e.to_string()))?;
            let meta_path = path.with_extension("meta.json");
            let meta = serde_json::to_string_pretty(&report.meta)
                .map_err(|e| CliFailure::runtime(e.to_string()))?;
            std::fs::write(&meta_path, meta).map_err(|e| CliFailure::runtime(e.to_string()))?;
            println!("wrote {} and {}", path.display(), meta_path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliFailure> {
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| CliFailure::usage(format!("config {}: {e}", args.config.display())))?;
    let config: FunctionalConfig = serde_json::from_str(&raw)
        .map_err(|e| CliFailure::usage(format!("config {}: {e}", args.config.display())))?;
    let domain = BoxDomain::new(config.domain_lower, config.domain_upper)
        .map_err(|e| CliFailure::usage(e.to_string()))?;

    let (mut spec, default_k) = match config.functional.as_str() {
        "circle" | "unit_circle" => (
            FunctionalSpec::linear_on_chart(ChartManifold::unit_circle(), unit_weight()),
            36,
        ),
        "disk" | "upper_contour" => (
            FunctionalSpec::upper_contour(unit_weight(), domain.clone()),
            64,
        ),
        other => {
            return Err(CliFailure::usage(format!(
                "unknown functional `{other}` (expected `circle` or `disk`)"
            )))
        }
    };
    if let Some(n) = args.nodes {
        spec = spec.with_eval_points(n);
    }
    if let Some(n) = args.band_nodes {
        spec = spec.with_band_points(n);
    }
    if let Some(e) = args.epsilon {
        spec = spec.with_epsilon(e);
    }

    let sample = Sample::from_csv_path(&args.data, domain.clone()).map_err(CliFailure::from)?;
    let k = args.k.unwrap_or(default_k);
    if sieve_dimension_warning(k, sample.n()) {
        eprintln!(
            "warning: K log K = {:.0} exceeds n = {}; the sieve may be too rich for this sample size",
            (k as f64) * (k as f64).ln(),
            sample.n()
        );
    }
    let basis = TensorSplineBasis::with_total_count(3, k, &domain)
        .map_err(|e| CliFailure::usage(e.to_string()))?;
    let fit = fit_sieve(&sample, &basis)?;
    let result = estimate(&spec, &fit, args.level)?;
    println!("{}", report::ESTIMATE_CSV_HEADER);
    println!("{}", report::estimate_csv_row(&result));
    Ok(())
}

fn cmd_rates(args: RatesArgs) -> Result<(), CliFailure> {
    let file = std::fs::File::open(&args.report)
        .map_err(|e| CliFailure::usage(format!("report {}: {e}", args.report.display())))?;
    let rows = report::read_study_rows(file)?;
    let slope = empirical_rate_of(&rows)?;
    println!("empirical_slope,{}", report::fmt_sig(slope, 6));
    if let (Some(s), Some(d), Some(m)) = (args.smoothness, args.dim, args.manifold_dim) {
        if m > d || s == 0 || d == 0 {
            return Err(CliFailure::usage(
                "theoretical rate needs s >= 1, d >= 1, m <= d",
            ));
        }
        let theory = -(s as f64) / (2 * s + d - m) as f64;
        println!("theoretical_slope,{}", report::fmt_sig(theory, 6));
    }
    Ok(())
}
