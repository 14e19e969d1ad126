use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use modsplit::engine::eval::predictions;
use modsplit::evaluator::ComposedModel;
use modsplit::patcher::class_metrics;
use serde::Serialize;

use super::{fmt4, Ctx};
use crate::io::{load_dataset, load_model, write_text};
use crate::table::Table;
use crate::ConfigError;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Model directory to evaluate.
    #[arg(long, conflicts_with = "modules")]
    pub model: Option<PathBuf>,
    /// Output directory of `modularize`; its module_N directories are composed.
    #[arg(long)]
    pub modules: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let (classes, preds) = match (&args.model, &args.modules) {
        (Some(dir), _) => {
            let model = load_model(dir)?;
            (model.num_classes(), predictions(&model, &data)?)
        }
        (None, Some(dir)) => {
            let mut modules = Vec::new();
            while dir.join(format!("module_{}", modules.len())).is_dir() {
                modules.push(load_model(&dir.join(format!("module_{}", modules.len())))?);
            }
            if modules.is_empty() {
                return Err(ConfigError(format!("no module_0 directory in {}", dir.display())).into());
            }
            let n = modules.len();
            let cm = ComposedModel::new((0..n).collect(), modules)?;
            let preds = (0..data.len())
                .map(|i| cm.predict(&data.image(i)))
                .collect::<modsplit::Result<Vec<_>>>()?;
            (n, preds)
        }
        (None, None) => return Err(ConfigError("eval needs --model or --modules".into()).into()),
    };
    let hits = preds.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    let acc = hits as f64 / data.len().max(1) as f64;
    let mut t = Table::new(&["class", "support", "precision", "recall", "f1"]);
    let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), fmt4);
    for m in class_metrics(&preds, data.labels(), classes) {
        t.push(vec![m.class.to_string(), m.support.to_string(), cell(m.precision), cell(m.recall), cell(m.f1)]);
    }
    fs::create_dir_all(&ctx.out_dir).context("creating output directory")?;
    write_text(&ctx.out_dir.join("eval_report.csv"), &t.to_csv())?;
    println!("accuracy {acc:.4} on {} samples", data.len());
    print!("{}", t.to_text());
    Ok(())
}
