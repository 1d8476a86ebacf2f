//! Command-line front end.
//!
//! Exit codes: 0 success, 1 parse/validation/IO or numerical error,
//! 2 barycenter non-convergence (best iterate still written), 3 infeasible
//! surplus target, 4 too many failed replications in an experiment cell.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::barycenter::{barycenter, BarycenterResult};
use crate::config::{self, OptimizeConfig};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, ExperimentConfig, MomentEstimator};
use crate::market::build_asset_law;
use crate::portfolio::{moments_analytic, moments_mc, solve_portfolio, PortfolioSolution};
use crate::tables::{emit_tables, write_run_meta};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_EXPERIMENT: i32 = 4;

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "ALM_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "robust-alm",
    version,
    about = "Robust asset-liability portfolios from Wasserstein barycenters of Gaussian priors"
)]
pub struct Cli {
    /// More log output (repeat for debug detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Barycenter of a prior set file.
    Barycenter(IoArgs),
    /// Optimal portfolio for one market or a prior set.
    Optimize(RunArgs),
    /// Replication experiment; writes table2.csv, table3.csv and run_meta.json.
    Experiment(RunArgs),
    /// Check a config file against every invariant.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct IoArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (optimize) or directory (experiment).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed; falls back to the ALM_SEED variable.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, required_unless_present = "schema")]
    pub config: Option<PathBuf>,
    /// Print template documents for every accepted config kind.
    #[arg(long)]
    pub schema: bool,
}

/// Solution plus how the aggregate law was obtained.
#[derive(Debug, Serialize)]
struct OptimizeOutput {
    #[serde(flatten)]
    solution: PortfolioSolution,
    moment_estimator: MomentEstimator,
    mc_samples: Option<usize>,
    rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    barycenter: Option<BarycenterReport>,
}

#[derive(Debug, Serialize)]
struct BarycenterReport {
    iterations: usize,
    converged: bool,
    final_change: f64,
    frechet_variance: f64,
}

fn seed_override(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::validation(SEED_ENV, format!("not an unsigned integer: `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("output serialises") + "\n";
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_barycenter(args: &IoArgs) -> Result<i32> {
    let priors = config::load(&args.config)?;
    let result: BarycenterResult = barycenter(&priors, Default::default())?;
    write_json(&result, args.out.as_deref())?;
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "warning: barycenter did not converge after {} iterations (last change {:e}); best iterate written",
            result.iterations, result.final_change
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_optimize(args: &RunArgs) -> Result<i32> {
    let mut cfg: OptimizeConfig = config::load(&args.config)?;
    if let Some(seed) = seed_override(args.seed)? {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    let (law, report) = match (&cfg.market, &cfg.priors) {
        (Some(market), _) => (build_asset_law(market, &cfg.asset_law)?, None),
        (None, Some(priors)) => {
            let b = barycenter(priors, cfg.barycenter)?;
            let report = BarycenterReport {
                iterations: b.iterations,
                converged: b.converged,
                final_change: b.final_change,
                frechet_variance: b.frechet_variance,
            };
            (b.model, Some(report))
        }
        (None, None) => unreachable!("validated"),
    };
    let moments = match cfg.moment_estimator {
        MomentEstimator::Mc => moments_mc(&law, cfg.mc_samples, cfg.rng_seed)?,
        MomentEstimator::Analytic => moments_analytic(&law)?,
    };
    let solution = solve_portfolio(&moments, &cfg.problem)?;
    let converged = report.as_ref().is_none_or(|r| r.converged);
    let mc = cfg.moment_estimator == MomentEstimator::Mc;
    let out = OptimizeOutput {
        solution,
        moment_estimator: cfg.moment_estimator,
        mc_samples: mc.then_some(cfg.mc_samples),
        rng_seed: mc.then_some(cfg.rng_seed),
        barycenter: report,
    };
    write_json(&out, args.out.as_deref())?;
    if converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: barycenter did not converge; solution computed from the best iterate");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_experiment(args: &RunArgs) -> Result<i32> {
    let mut cfg: ExperimentConfig = config::load(&args.config)?;
    if let Some(seed) = seed_override(args.seed)? {
        cfg.rng_seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let start = Instant::now();
    let report = run_experiment(&cfg, args.threads)?;
    let (t2, t3) = emit_tables(&report, &out)?;
    let meta = write_run_meta(&report, start.elapsed().as_secs_f64(), &out)?;
    for p in [t2, t3, meta] {
        log::info!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    if args.schema {
        write_json(&config::templates(), None)?;
        if args.config.is_none() {
            return Ok(EXIT_OK);
        }
    }
    let path = args.config.as_deref().expect("clap enforces --config");
    let doc = config::parse_document(&config::read_text(path)?, &path.display().to_string())?;
    doc.validate()?;
    println!("ok: {} ({})", doc.kind(), path.display());
    Ok(EXIT_OK)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::Experiment { .. } => EXIT_EXPERIMENT,
        _ => EXIT_ERROR,
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let outcome = match &cli.command {
        Command::Barycenter(a) => cmd_barycenter(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            exit_code(&Error::Infeasible {
                unconstrained_surplus: 1.0
            }),
            3
        );
        assert_eq!(
            exit_code(&Error::Experiment {
                cell: "x".into(),
                failures: 1,
                replications: 2
            }),
            4
        );
        assert_eq!(exit_code(&Error::Solver("x".into())), 1);
    }

    #[test]
    fn validate_requires_config_or_schema() {
        assert!(Cli::try_parse_from(["robust-alm", "validate"]).is_err());
        assert!(Cli::try_parse_from(["robust-alm", "validate", "--schema"]).is_ok());
    }
}
