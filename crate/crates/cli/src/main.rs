//! Command-line front end: simulate scenarios, score logs against goal
//! hierarchies, fit pattern tables, train policies, run transfer sweeps and
//! paired trials, and re-render stored reports.
//!
//! Exit codes: 0 on success, 1 on data errors (bad or missing input files,
//! reported with file and line), 2 on usage errors (reported with the
//! offending flag).

mod artifacts;
mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Wrong invocation; the message names the flag at fault. Exit 2.
    Usage(String),
    /// Bad input data; the message names the file (and line where known).
    /// Exit 1.
    Data(String),
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError::Usage(message.into())
    }

    fn data(message: impl Into<String>) -> CliError {
        CliError::Data(message.into())
    }
}

#[derive(Parser)]
#[command(
    name = "cat-bench",
    version,
    about = "Synthetic listening-log simulation and goal-alignment evaluation"
)]
struct Cli {
    /// Directory for produced artifacts (default: $CAT_BENCH_OUT, else ./out)
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Accept unknown fields when parsing event logs (strict by default)
    #[arg(long, global = true)]
    lenient: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its event log
    Generate {
        /// Scenario config file
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
        /// Replay a previous run from its manifest instead
        #[arg(long, value_name = "FILE")]
        from_manifest: Option<PathBuf>,
        /// Recommendation policy: uniform, or static:<action>
        #[arg(long, value_name = "POLICY")]
        policy: Option<String>,
        /// Override the scenario duration in weeks
        #[arg(long, value_name = "N")]
        weeks: Option<u32>,
    },
    /// Score an event log against a goal hierarchy
    Evaluate {
        /// Event log (newline-delimited records)
        #[arg(long, value_name = "FILE")]
        log: PathBuf,
        /// Goal hierarchy file
        #[arg(long, value_name = "FILE")]
        goals: PathBuf,
        /// Fixed observation window in days (default: derived from the log)
        #[arg(long, value_name = "N")]
        horizon_days: Option<u32>,
    },
    /// Fit the hidden-pattern conditional tables from a log
    FitPattern {
        /// Event log (newline-delimited records)
        #[arg(long, value_name = "FILE")]
        log: PathBuf,
        /// Hidden state bucket count
        #[arg(long, value_name = "K", default_value_t = cat_bench::pattern::DEFAULT_BUCKETS)]
        buckets: usize,
        /// Additive smoothing for the conditional tables
        #[arg(long, value_name = "L", default_value_t = cat_bench::pattern::DEFAULT_SMOOTHING)]
        smoothing: f64,
        /// Seconds of engagement that count a user-day as engaged
        #[arg(long, value_name = "S", default_value_t = cat_bench::pattern::DEFAULT_ENGAGED_THRESHOLD_S)]
        engaged_threshold_s: u64,
    },
    /// Train a recommendation policy for a scenario
    Optimize {
        /// Scenario config file
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// Discount factor in [0, 1)
        #[arg(long, value_name = "G")]
        gamma: Option<f64>,
        /// Value-iteration stopping tolerance
        #[arg(long, value_name = "T")]
        tolerance: Option<f64>,
    },
    /// Train on each scenario and score every ordered source/target pair
    Transfer {
        /// Directory of scenario config files
        #[arg(long, value_name = "DIR")]
        scenarios: PathBuf,
    },
    /// Run the paired control/treatment trial from a scenario directory
    Rct {
        /// Directory of scenario config files (control and treatment arms)
        #[arg(long, value_name = "DIR")]
        scenarios: PathBuf,
        /// Override every scenario's duration in weeks
        #[arg(long, value_name = "N")]
        weeks: Option<u32>,
    },
    /// Re-render a stored trial report
    Report {
        /// report.json produced by the rct subcommand
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors.
        Err(err) => err.exit(),
    };
    match commands::dispatch(cli) {
        Ok(()) => {}
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
    }
}
