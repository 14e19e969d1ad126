use std::path::PathBuf;

use anyhow::Result;
use modsplit::patcher::{calibrate_module, evaluate_patch};
use serde::Serialize;

use super::Ctx;
use crate::io::{load_dataset, load_model, model_files, write_json, write_text};
use crate::manifest::ManifestBuilder;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory of the weak model.
    #[arg(long)]
    pub weak: PathBuf,
    /// Directory of the module for the target class.
    #[arg(long)]
    pub module: PathBuf,
    /// Training data; the target class's samples calibrate the module.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Target class to patch.
    #[arg(long)]
    pub tc: usize,
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut manifest = ManifestBuilder::new("patch", ctx.seed, args)?;
    let weak = load_model(&args.weak)?;
    let module = load_model(&args.module)?;
    let train = load_dataset(&args.train)?;
    let test = load_dataset(&args.test)?;
    for p in model_files(&args.weak).iter().chain(&model_files(&args.module)).chain([&args.train, &args.test]) {
        manifest.input(p)?;
    }
    let cal = manifest.stage("calibrate", || Ok(calibrate_module(&module, &train, args.tc)?))?;
    let report = manifest.stage("evaluate", || Ok(evaluate_patch(&weak, &module, &cal, &test, args.tc)?))?;
    let text = report.to_table();
    let outputs = vec![
        write_text(&ctx.out_dir.join("patch_report.csv"), &report.to_csv())?,
        write_text(&ctx.out_dir.join("patch_report.txt"), &text)?,
        write_json(&ctx.out_dir.join("patch_report.json"), &report)?,
    ];
    manifest.outputs(outputs)?;
    manifest.write(&ctx.out_dir)?;
    print!("{text}");
    Ok(())
}
