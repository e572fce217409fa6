//! `elapsed`: command-line driver for the elapsed-time population model.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use elapsed_core::{ActivityError, EvolutionError, Execution};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "elapsed", version, about = "Elapsed-time structured neuron population model")]
struct Cli {
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    print_defaults: bool,

    /// Run batch work sequentially instead of on the thread pool.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the model and write the time series.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV file for the recorded time series.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the stationary density.
    SteadyState {
        #[arg(long)]
        config: PathBuf,
        /// CSV file for the stationary density.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectrum of the equation linearized at the stationary state.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// CSV file for the eigenvalues.
        #[arg(long)]
        eigs_out: Option<PathBuf>,
        /// CSV file for the normalized kernel vector next to the stationary density.
        #[arg(long)]
        kernel_out: Option<PathBuf>,
    },
    /// One summary row per coupling strength.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an exponential decay to the distance column of a trace.
    DecayFit {
        /// Trace CSV written by `simulate`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        from: f64,
        #[arg(long, default_value_t = 30.0)]
        to: f64,
    },
    /// Run the acceptance suite and print one line per criterion.
    Accept {
        /// Only run these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<EvolutionError>() {
            if e.is_invariant_violation() {
                return 2;
            }
            if e.is_ambiguity() {
                return 3;
            }
        }
        if let Some(ActivityError::Ambiguous { .. }) = cause.downcast_ref::<ActivityError>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", config::DEFAULTS);
        return ExitCode::SUCCESS;
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(1);
    };
    let result = match command {
        Command::Simulate { config, out } => commands::simulate(&config, out.as_deref()),
        Command::SteadyState { config, out } => commands::steady_state(&config, out.as_deref()),
        Command::Spectrum {
            config,
            eigs_out,
            kernel_out,
        } => commands::spectrum(&config, eigs_out.as_deref(), kernel_out.as_deref()),
        Command::Sweep { config, out } => commands::sweep(&config, out.as_deref(), exec),
        Command::DecayFit { trace, from, to } => commands::decay_fit(&trace, (from, to)),
        Command::Accept { only } => commands::accept(&only, exec),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
