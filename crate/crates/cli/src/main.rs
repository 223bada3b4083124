use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ousse_cli::commands::write_covariance;
use ousse_cli::{parse_config, simulate, verify, CliError, CovarianceArgs, ExperimentConfig};

/// Quantum trajectories driven by Ornstein-Uhlenbeck noise.
#[derive(Debug, Parser)]
#[command(name = "ousse", version)]
struct Cli {
    /// Worker threads. Changes scheduling only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ensemble and write series.csv and summary.json.
    Simulate(RunArgs),
    /// Run the configured verification suites and write verify.json.
    Verify(RunArgs),
    /// Tabulate empirical against analytic OU covariance.
    Covariance {
        #[arg(long)]
        gamma: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 100_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated grid times (default: five points up to T).
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Directory for covariance.csv; prints to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg = cfg.with_out_dir(out.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            simulate(&cfg)?;
            eprintln!("wrote {}", cfg.out_dir.join("series.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let cfg = load(&args)?;
            let report = verify(&cfg)?;
            for c in &report.checks {
                println!(
                    "{:<20} {} statistic {} {} {}",
                    c.name,
                    if c.pass { "PASS" } else { "FAIL" },
                    c.statistic,
                    c.comparison,
                    c.threshold
                );
            }
            for s in &report.skipped {
                println!("{:<20} SKIP {}", s.name, s.reason);
            }
            Ok(if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        Command::Covariance {
            gamma,
            horizon,
            dt,
            n_paths,
            seed,
            times,
            out,
        } => {
            let args = CovarianceArgs {
                gamma,
                horizon,
                dt,
                n_paths,
                seed,
                times,
            };
            let csv = write_covariance(&args, out.as_deref().map(Path::new))?;
            if out.is_none() {
                print!("{csv}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
