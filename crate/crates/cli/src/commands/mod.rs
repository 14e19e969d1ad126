use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};

use crate::{Cli, Command};

pub mod analyze;
pub mod eval;
pub mod modularize;
pub mod patch;
pub mod report;
pub mod synth;
pub mod train;

/// Settings shared by every command.
pub struct Ctx {
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Synth(a) => synth::run(&ctx, &a).context("synth"),
        Command::Train(a) => train::run(&ctx, &a).context("train"),
        Command::Analyze(a) => analyze::run(&ctx, &a).context("analyze"),
        Command::Modularize(a) => modularize::run(&ctx, &a).context("modularize"),
        Command::Patch(a) => patch::run(&ctx, &a).context("patch"),
        Command::Report(a) => report::run(&ctx, &a).context("report"),
        Command::Eval(a) => eval::run(&ctx, &a).context("eval"),
    }
}

pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}
