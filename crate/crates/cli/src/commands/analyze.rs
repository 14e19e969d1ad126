use std::path::PathBuf;

use anyhow::Result;
use modsplit::analysis::sensitivity::DEFAULT_LOSS_THRESHOLD;
use modsplit::analysis::{importance_table, layer_sensitivity, DEFAULT_SAMPLE_CAP};
use serde::Serialize;

use super::{fmt4, Ctx};
use crate::io::{load_dataset, load_model, model_files, write_json, write_text};
use crate::manifest::ManifestBuilder;
use crate::table::Table;

pub const IMPORTANCE_FILE: &str = "importance.json";
pub const SENSITIVITY_FILE: &str = "sensitivity.json";

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory holding spec.txt and weights.cnsp.
    #[arg(long)]
    pub model: PathBuf,
    /// Training data, used for kernel importance.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation data, used for layer sensitivity.
    #[arg(long)]
    pub val: PathBuf,
    /// Samples per class averaged for importance.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
    pub sample_cap: usize,
    /// Accuracy loss at 90% removal above which a layer is sensitive.
    #[arg(long, default_value_t = DEFAULT_LOSS_THRESHOLD)]
    pub threshold: f64,
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut manifest = ManifestBuilder::new("analyze", ctx.seed, args)?;
    let model = load_model(&args.model)?;
    let train = load_dataset(&args.train)?;
    let val = load_dataset(&args.val)?;
    for p in model_files(&args.model).iter().chain([&args.train, &args.val]) {
        manifest.input(p)?;
    }

    let importance = manifest.stage("importance", || Ok(importance_table(&model, &train, args.sample_cap)?))?;
    let profile = manifest.stage("sensitivity", || {
        Ok(layer_sensitivity(&model, &val, &importance.class_mean(), args.threshold)?)
    })?;

    let mut curve = Table::new(&["conv", "ratio", "dropped", "accuracy", "sensitive"]);
    for layer in &profile.layers {
        for &(ratio, dropped, acc) in &layer.curve {
            curve.push(vec![
                layer.conv.to_string(),
                format!("{ratio:.1}"),
                dropped.to_string(),
                fmt4(acc),
                layer.sensitive.to_string(),
            ]);
        }
    }
    let outputs = vec![
        write_json(&ctx.out_dir.join(IMPORTANCE_FILE), &importance)?,
        write_json(&ctx.out_dir.join(SENSITIVITY_FILE), &profile)?,
        write_text(&ctx.out_dir.join("sensitivity.csv"), &curve.to_csv())?,
    ];
    manifest.outputs(outputs)?;
    manifest.write(&ctx.out_dir)?;

    println!("baseline validation accuracy {:.4}", profile.baseline_accuracy);
    for layer in &profile.layers {
        let at90 = layer.curve.last().map_or(f64::NAN, |c| c.2);
        println!(
            "conv{}: accuracy at 90% removal {:.4} -> {}",
            layer.conv,
            at90,
            if layer.sensitive { "sensitive" } else { "insensitive" }
        );
    }
    Ok(())
}
