//! `metricflow`: batch front end for invariant phase-space metrics.
//!
//! ```text
//! metricflow classify      --config sys.json [--out report.json] [--tol 1e-8] [--seed 7]
//! metricflow evolve-metric --config sys.json [--out metric.csv]
//! metricflow audit         --config sys.json [--tol 1e-8]
//! metricflow bracket       --config sys.json --a q1 --b p1 [--c q1*p1]
//! ```
//!
//! Exit codes: 0 success, 10 non-Hamiltonian, 20 audit failure, 64 usage,
//! 65 invalid config, 66 unreadable config, 70 computation failure,
//! 74 unwritable output. Errors are printed to stdout as a JSON object.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::error::{exit, CliError};

const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "metricflow",
    version,
    about = "Invariant skew-symmetric phase-space metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON system definition.
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Residual tolerance for classify and audit.
    #[arg(long)]
    tol: Option<f64>,
    /// Overrides `samples.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Hamiltonian or not, by the closedness of ω(X).
    Classify(Common),
    /// Metric on a time grid from every available route, as CSV.
    EvolveMetric(Common),
    /// Invariance, Jacobi and volume checks of the configured metric.
    Audit(Common),
    /// Bracket values, Jacobi residual and Leibniz defect at the query points.
    Bracket {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        c: Option<String>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Classify(c) | Command::EvolveMetric(c) | Command::Audit(c) => c,
            Command::Bracket { common, .. } => common,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("METRICFLOW_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "METRICFLOW_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(command: &Command) -> Result<i32, CliError> {
    configure_threads()?;
    let common = command.common();
    let tol = common.tol.unwrap_or(DEFAULT_TOLERANCE);
    if !(tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let mut cfg = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.samples.seed = seed;
    }
    let sys = cfg.build()?;
    let Outcome { text, code } = match command {
        Command::Classify(_) => commands::classify::run(&sys, tol)?,
        Command::EvolveMetric(_) => commands::evolve::run(&sys)?,
        Command::Audit(_) => commands::audit::run(&sys, tol)?,
        Command::Bracket { a, b, c, .. } => commands::bracket::run(&sys, a, b, c.as_deref())?,
    };
    output::emit(&text, common.out.as_deref())?;
    Ok(code)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            println!("{}", e.to_json());
            e.exit_code()
        }
    };
    std::process::exit(code);
}
