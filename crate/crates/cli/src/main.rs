mod commands;
mod config;
mod exit;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::exit::CliError;

#[derive(Parser)]
#[command(name = "reachkit", version, about = "Reachability tubes and inverse constraint learning on grids")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "REACHKIT_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the avoid tube of the configured model.
    Brt,
    /// Expert policies, rollouts and expert density.
    Demos,
    /// Learn a constraint from the expert density.
    Icl {
        /// JSON-lines demonstrations to learn from instead of `demos` output.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Score the learned constraint against tube and failure labels.
    Eval {
        /// Rerun the pipeline for each seed and aggregate, e.g. `1,2,3`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Plan under constraints borrowed from other presets.
    Transfer,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("cannot size thread pool: {e}")))?;
    }
    let config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    }
    .with_seed(cli.common.seed);
    let out = cli.common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    match cli.command {
        Command::Brt => commands::cmd_brt(&config, &out),
        Command::Demos => commands::cmd_demos(&config, &out),
        Command::Icl { demos } => commands::cmd_icl(&config, &out, demos.as_deref()),
        Command::Eval { seeds } => commands::cmd_eval(&config, &out, &seeds),
        Command::Transfer => commands::cmd_transfer(&config, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
