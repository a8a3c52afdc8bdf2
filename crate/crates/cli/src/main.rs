//! `priorcheck`: run the staged conflict checks, calibrate their p-values,
//! or inspect the samplers.
//!
//! Exit status: 0 on success (whatever the checks decided), 1 on usage
//! errors, 2 on invalid data or configuration, 3 on infeasible statistics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "priorcheck",
    version,
    about = "Staged model and prior-data conflict checks for the normal-normal hierarchical model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Threads {
    /// Worker threads for Monte Carlo loops (0 = all cores). Results do not
    /// depend on this value.
    #[arg(long, env = "PRIORCHECK_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the model, second-level and hyperprior checks in order.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `n_draws` from the config.
        #[arg(long)]
        draws: Option<usize>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Check that a stage's p-values are uniform on data from its reference law.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Number of simulated datasets.
        #[arg(long, default_value_t = 2000)]
        datasets: usize,
        /// Reference draws per check.
        #[arg(long, default_value_t = 999)]
        draws: usize,
        /// Hyperparameter mean for the model and pi2 stages.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        truth_mu: f64,
        /// Hyperparameter variance for the model and pi2 stages.
        #[arg(long, default_value_t = 1.0)]
        truth_tau2: f64,
        /// Number of groups in each simulated dataset.
        #[arg(long, default_value_t = 5)]
        groups: usize,
        /// Observations per group in each simulated dataset.
        #[arg(long, default_value_t = 3)]
        per_group: usize,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Print sampler draws, one JSON array per line.
    Sample {
        #[arg(long, value_enum)]
        what: SampleKind,
        /// Sampler parameters as a JSON object.
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum StageArg {
    Model,
    Pi2,
    Pi1,
    Pi2Star,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SampleKind {
    #[value(name = "sphere")]
    Sphere,
    #[value(name = "T_given_V")]
    TGivenV,
    #[value(name = "residuals")]
    Residuals,
    #[value(name = "V_given_hyper")]
    VGivenHyper,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
