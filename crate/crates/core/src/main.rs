use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raps::cli::{self, CliError, CliResult, RunConfig};
use raps::types::EstimatorKind;

#[derive(Parser)]
#[command(
    name = "raps",
    version,
    about = "Compare EKF, threshold-decision and RAPS measurement selection on GNSS epochs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an epoch file and a truth file from a scenario.
    Simulate(Common),
    /// Run the estimators and write records and summaries.
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of EKF, TD, RAPS-greedy, RAPS-exhaustive.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<EstimatorKind>>,
    },
    /// Recompute summary, CDF and risk-trace files from a records file.
    Report {
        /// records.csv written by `run`.
        records: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> CliResult<(RunConfig, PathBuf)> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config = config.with_seed(seed);
        }
        let out = self.out.clone().unwrap_or_else(|| config.output.clone());
        config.output = out.clone();
        Ok((config, out))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => {
            let (config, out) = common.load()?;
            cli::simulate(&config, &out)
        }
        Command::Run { common, estimators } => {
            let (mut config, out) = common.load()?;
            if let Some(estimators) = estimators {
                config.estimators = estimators;
            }
            cli::run(&config, &out).map(|_| ())
        }
        Command::Report { records, out } => cli::report(&records, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("raps: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
