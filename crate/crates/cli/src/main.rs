//! `roughwall`: run cell, steady, unsteady and sweep computations from a TOML
//! configuration file.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical or output failure.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::Failure;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "roughwall", version, about = "Rough-wall channel flow solver and wall-law convergence studies")]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `workers`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Debug logging (RUST_LOG takes precedence).
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Solve the boundary-layer cell problem; writes the corrector summary and decay plot.
    Cell,
    /// Solve the steady channel problem; writes the summary, field and mesh files.
    Steady,
    /// Integrate the unsteady problem; writes the energy trace and plot.
    Unsteady,
    /// Run the convergence sweep over `sweep.epsilons`; writes the report and log-log plots.
    Sweep,
    /// Validate the configuration and build the meshes without solving.
    Check,
}

fn help_defaults() -> String {
    format!("Configuration keys with their defaults:\n\n{}", RunConfig::default().to_toml())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cfg.workers == 0 {
        return Err(config::ConfigError("workers must be at least 1".into()).into());
    }
    // Per-cell assembly loops share this pool; the sweep builds its own.
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| Failure::Numerical(e.into()))?;
    let files = match cli.command {
        Cmd::Cell => commands::cmd_cell(&cfg),
        Cmd::Steady => commands::cmd_steady(&cfg),
        Cmd::Unsteady => commands::cmd_unsteady(&cfg),
        Cmd::Sweep => commands::cmd_sweep(&cfg),
        Cmd::Check => commands::cmd_check(&cfg),
    }?;
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = match Cli::command().after_long_help(help_defaults()).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same command");
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
