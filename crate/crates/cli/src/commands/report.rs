use std::path::PathBuf;

use anyhow::Result;
use modsplit::store::{count_flops, count_kernels, presets, ModelSpec};
use serde::Serialize;

use super::Ctx;
use crate::io::{load_model, write_text};
use crate::table::Table;
use crate::ConfigError;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Parent model directory.
    #[arg(long, conflicts_with = "preset")]
    pub model: Option<PathBuf>,
    /// Built-in architecture to report instead of a model directory.
    #[arg(long)]
    pub preset: Option<String>,
    /// Class count for desk presets.
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Module directories compared against the parent.
    #[arg(long = "module")]
    pub modules: Vec<PathBuf>,
}

fn reduction(part: u64, whole: u64) -> String {
    format!("{:.2}%", 100.0 * (1.0 - part as f64 / whole as f64))
}

pub fn cost_table(parent: &ModelSpec, modules: &[(String, ModelSpec)]) -> Result<Table> {
    let (pk, pf) = (count_kernels(parent) as u64, count_flops(parent)?);
    let mut t = Table::new(&["model", "kernels", "flops", "kernel_reduction", "flops_reduction"]);
    t.push(vec![parent.name.clone(), pk.to_string(), pf.to_string(), "0.00%".into(), "0.00%".into()]);
    for (name, spec) in modules {
        let (k, f) = (count_kernels(spec) as u64, count_flops(spec)?);
        t.push(vec![name.clone(), k.to_string(), f.to_string(), reduction(k, pk), reduction(f, pf)]);
    }
    Ok(t)
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let parent = match (&args.model, &args.preset) {
        (Some(dir), _) => load_model(dir)?.spec,
        (None, Some(name)) => presets::by_name(name, args.classes).ok_or_else(|| {
            ConfigError(format!("unknown preset {name:?}; available: {}", presets::NAMES.join(", ")))
        })?,
        (None, None) => return Err(ConfigError("report needs --model or --preset".into()).into()),
    };
    let modules = args
        .modules
        .iter()
        .map(|dir| {
            let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((name, load_model(dir)?.spec))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = cost_table(&parent, &modules)?;
    write_text(&ctx.out_dir.join("cost_report.csv"), &table.to_csv())?;
    write_text(&ctx.out_dir.join("cost_report.txt"), &table.to_text())?;
    print!("{}", table.to_text());
    Ok(())
}
