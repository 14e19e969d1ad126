use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod io;
mod manifest;
mod table;

#[derive(Debug, Parser)]
#[command(name = "modsplit", version, about = "Split a trained CNN into per-class modules and patch weak models")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Random seed shared by every stage.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Directory for outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// key = value file supplying defaults for flags; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic glyph dataset.
    Synth(commands::synth::Args),
    /// Train a model.
    Train(commands::train::Args),
    /// Kernel importance and layer sensitivity.
    Analyze(commands::analyze::Args),
    /// Search for one module per class.
    Modularize(commands::modularize::Args),
    /// Patch a weak model's target class with a module.
    Patch(commands::patch::Args),
    /// Kernel counts, FLOPs and reductions.
    Report(commands::report::Args),
    /// Accuracy and per-class metrics of a model or composed modules.
    Eval(commands::eval::Args),
}

/// A problem with the invocation rather than with running it.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<ConfigError>()
            || matches!(
                e.downcast_ref::<modsplit::Error>(),
                Some(modsplit::Error::Config(_) | modsplit::Error::UnknownStrategy { .. })
            )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match config::parse_with_config(args) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
