use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpfactor_cli::commands;
use dpfactor_cli::exit_code;

/// Bayesian factor regression for zero-inflated compositional count data.
#[derive(Parser)]
#[command(name = "dpfactor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set sampler.thin=5`.
    #[arg(long = "set", value_name = "KEY.PATH=VALUE")]
    overrides: Vec<String>,
    /// Replace an existing completed run in the output directory.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from a scenario file.
    Simulate {
        /// Scenario file (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY.PATH=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Run MCMC chains and write chain files plus diagnostics.
    Fit {
        #[command(flatten)]
        shared: Shared,
        /// Also export each chain as CSV.
        #[arg(long)]
        export_csv: bool,
    },
    /// Recompute the convergence report from chain files.
    Diagnose {
        #[command(flatten)]
        shared: Shared,
    },
    /// Covariate-effect and similarity summaries from fitted chains.
    Summarize {
        #[command(flatten)]
        shared: Shared,
    },
    /// Permutation test of the global null for one covariate.
    Permtest {
        #[command(flatten)]
        shared: Shared,
        /// Raw covariate to test.
        #[arg(long)]
        covariate: String,
        /// Number of permutations (defaults to the config value).
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Leave-one-out predictive coverage from fitted chains.
    Loocheck {
        #[command(flatten)]
        shared: Shared,
        /// Predictive interval level.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Recovery metrics of a fit against simulated ground truth.
    Score {
        #[command(flatten)]
        shared: Shared,
        /// Ground truth file written by `simulate`.
        #[arg(long)]
        truth: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with successful exit
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Simulate {
            spec,
            out,
            overrides,
            overwrite,
        } => commands::simulate::run(spec, out, overrides, *overwrite),
        Command::Fit { shared, export_csv } => commands::fit::run(
            &shared.config,
            &shared.overrides,
            shared.overwrite,
            *export_csv,
        ),
        Command::Diagnose { shared } => {
            commands::diagnose::run(&shared.config, &shared.overrides, shared.overwrite)
        }
        Command::Summarize { shared } => {
            commands::summarize::run(&shared.config, &shared.overrides, shared.overwrite)
        }
        Command::Permtest {
            shared,
            covariate,
            permutations,
        } => commands::permtest::run(
            &shared.config,
            covariate,
            *permutations,
            &shared.overrides,
            shared.overwrite,
        ),
        Command::Loocheck { shared, level } => commands::loocheck::run(
            &shared.config,
            *level,
            &shared.overrides,
            shared.overwrite,
        ),
        Command::Score { shared, truth } => commands::score::run(
            &shared.config,
            truth,
            &shared.overrides,
            shared.overwrite,
        ),
    };
    match result {
        Ok(manifest) => {
            eprintln!(
                "{} finished in {:.1}s; {} files recorded",
                manifest.command,
                manifest.wall_clock_seconds,
                manifest.files.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
