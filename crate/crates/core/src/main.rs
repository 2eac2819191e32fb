//! Thin CLI over the library: run an experiment config to CSV, or re-run
//! the oracle/selftest verification suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use onebit_gamp::checks::{all_passed, format_reports, selftest_suite, validation_suite};
use onebit_gamp::experiment::{self, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "onebit-gamp",
    about = "Sparse recovery from noisy one-bit measurements: experiments and numeric verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment described by a TOML config.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Output CSV path.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Report zero runtimes so the CSV is byte-reproducible.
        #[arg(long)]
        no_runtime: bool,
        /// Exit non-zero if any trial failed (NaN/divergence).
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Validate every closed-form moment against the quadrature oracle.
    Oracle {
        /// Randomized draws per formula.
        #[arg(long, default_value_t = 500)]
        draws: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run the structural invariant suite.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

fn setup_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> onebit_gamp::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            trials,
            no_runtime,
            strict,
            common,
        } => {
            setup_threads(common.threads);
            let mut cfg = ExperimentConfig::from_toml_path(&config)?;
            if let Some(seed) = common.seed {
                cfg.scenario.seed = seed;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if no_runtime {
                cfg.report_runtime = false;
            }
            cfg.validate()?;
            let table = experiment::run(&cfg)?;
            table.write_csv(&out)?;
            let failures = table.total_failures();
            println!(
                "wrote {} rows to {} ({} trial failures)",
                table.rows.len(),
                out.display(),
                failures
            );
            for row in &table.rows {
                println!(
                    "  {}={:<8} {:<13} mean_nmse={:.4} stderr={:.4} trials={} failures={}",
                    row.sweep_param,
                    row.sweep_value,
                    row.algorithm.as_str(),
                    row.mean_nmse,
                    row.std_err,
                    row.trials,
                    row.failures
                );
            }
            if strict && (failures > 0 || table.rows.iter().any(|r| !r.mean_nmse.is_finite())) {
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { draws, common } => {
            setup_threads(common.threads);
            let seed = common.seed.unwrap_or(0xbeef);
            let reports = validation_suite(seed, draws)?;
            print!("{}", format_reports(&reports));
            Ok(if all_passed(&reports) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Selftest { common } => {
            setup_threads(common.threads);
            let seed = common.seed.unwrap_or(0xfeed);
            let reports = selftest_suite(seed)?;
            print!("{}", format_reports(&reports));
            Ok(if all_passed(&reports) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
