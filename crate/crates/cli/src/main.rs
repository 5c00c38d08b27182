//! Command-line runner for the disc-collision experiments.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Relaxed MSA for optimal control with colliding discs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment description.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the output files; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once, writing convergence, control, trajectory and summary files.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Override `params.max_iters`.
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Refinement study against the analytic solution.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "60,120,240,480,960")]
        n_list: Vec<usize>,
    },
    /// Relaxed MSA against gradient descent with the matched learning rate.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Override `compare.iters`.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Analytic solution and golden values.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

const CONFIG_ERROR: u8 = 2;
const SOLVER_ERROR: u8 = 1;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Solve { common, .. }
        | Command::Sweep { common, .. }
        | Command::Compare { common, .. }
        | Command::Oracle { common } => common,
    };
    let mut exp = match config::load(&common.config) {
        Ok(e) => e,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&common.out) {
        eprintln!("cannot create {}: {e}", common.out.display());
        return ExitCode::from(SOLVER_ERROR);
    }
    let result = match &cli.command {
        Command::Solve { max_iters, .. } => {
            if let Some(k) = max_iters {
                exp.setup.params.max_iters = *k;
            }
            run::solve(&exp, &common.out)
        }
        Command::Sweep { n_list, .. } => run::sweep(&exp, n_list, &common.out),
        Command::Compare { iters, .. } => {
            if let Some(k) = iters {
                exp.compare_iters = *k;
            }
            run::compare_methods(&exp, &common.out)
        }
        Command::Oracle { .. } => run::oracle(&exp, &common.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if run::is_config_error(&e) {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::from(SOLVER_ERROR)
            }
        }
    }
}
