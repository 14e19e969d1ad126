use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::ValueEnum;
use modsplit::engine::{init_weights, sgd_train, EpochStats, TrainConfig};
use modsplit::engine::eval::accuracy;
use modsplit::store::{presets, Model, ModelSpec};
use serde::Serialize;

use super::{fmt4, Ctx};
use crate::io::{load_dataset, save_model, write_text};
use crate::manifest::ManifestBuilder;
use crate::table::Table;
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Weak {
    /// Shallow architecture.
    Simple,
    /// Half the best epoch of a baseline run.
    Underfit,
    /// No weight decay, augmentation or dropout.
    Overfit,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Model spec file.
    #[arg(long, conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in architecture name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation dataset, scored every epoch.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub weak: Option<Weak>,
    /// History CSV of the baseline run (for --weak underfit).
    #[arg(long)]
    pub baseline_history: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub momentum: Option<f32>,
    #[arg(long)]
    pub weight_decay: Option<f32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f32>,
    #[arg(long)]
    pub no_augment: bool,
    /// Train on only the first N samples of the dataset.
    #[arg(long)]
    pub limit: Option<usize>,
}

/// Epoch (1-based) with the highest validation accuracy; earliest on ties.
pub fn best_epoch(history_csv: &str) -> Result<usize> {
    let mut lines = history_csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| ConfigError(format!("baseline history lacks a {name} column")))
    };
    let (ep, val) = (col("epoch")?, col("val_accuracy")?);
    let mut best: Option<(usize, f64)> = None;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let parse_err = || ConfigError(format!("bad baseline history row {line:?}"));
        let e: usize = cells.get(ep).and_then(|c| c.parse().ok()).ok_or_else(parse_err)?;
        let v: f64 = cells.get(val).and_then(|c| c.parse().ok()).ok_or_else(parse_err)?;
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((e, v));
        }
    }
    Ok(best
        .ok_or_else(|| ConfigError("baseline history has no validation scores".into()))?
        .0)
}

fn history_table(history: &[EpochStats]) -> Table {
    let mut t = Table::new(&["epoch", "loss", "train_accuracy", "val_accuracy"]);
    for h in history {
        t.push(vec![
            (h.epoch + 1).to_string(),
            format!("{:.6}", h.loss),
            fmt4(h.train_accuracy),
            h.val_accuracy.map_or_else(String::new, fmt4),
        ]);
    }
    t
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut manifest = ManifestBuilder::new("train", ctx.seed, args)?;
    let mut data = load_dataset(&args.data)?;
    manifest.input(&args.data)?;
    if let Some(n) = args.limit {
        let idx: Vec<usize> = (0..n.min(data.len())).collect();
        data = data.subset(&idx);
    }
    let val = match &args.val {
        Some(p) => {
            manifest.input(p)?;
            Some(load_dataset(p)?)
        }
        None => None,
    };
    let classes = data.num_classes();

    let mut spec = match (&args.spec, &args.preset) {
        (Some(p), _) => {
            manifest.input(p)?;
            ModelSpec::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        (None, Some(name)) => presets::by_name(name, classes).ok_or_else(|| {
            ConfigError(format!("unknown preset {name:?}; available: {}", presets::NAMES.join(", ")))
        })?,
        (None, None) => presets::simcnn_desk(classes),
    };

    let d = TrainConfig::default();
    let mut cfg = TrainConfig {
        learning_rate: args.lr.unwrap_or(d.learning_rate),
        momentum: args.momentum.unwrap_or(d.momentum),
        weight_decay: args.weight_decay.unwrap_or(d.weight_decay),
        epochs: args.epochs.unwrap_or(d.epochs),
        batch_size: args.batch_size.unwrap_or(d.batch_size),
        augment: !args.no_augment,
        dropout_rate: args.dropout.unwrap_or(d.dropout_rate),
        seed: ctx.seed,
    };
    match args.weak {
        Some(Weak::Simple) => spec = presets::simple_desk(classes),
        Some(Weak::Underfit) => {
            let path = args
                .baseline_history
                .as_ref()
                .ok_or_else(|| ConfigError("--weak underfit needs --baseline-history".into()))?;
            manifest.input(path)?;
            let n_best = best_epoch(&fs::read_to_string(path)?)?;
            cfg.epochs = (n_best / 2).max(1);
        }
        Some(Weak::Overfit) => {
            cfg.weight_decay = 0.0;
            cfg.augment = false;
            cfg.dropout_rate = 0.0;
        }
        None => {}
    }

    let init = Model::new(spec.clone(), init_weights(&spec, ctx.seed)?)?;
    let (weights, history) = manifest.stage("train", || Ok(sgd_train(&init, &data, &cfg, val.as_ref())?))?;
    let model = Model::new(spec, weights)?;

    let mut outputs = save_model(&ctx.out_dir, &model)?;
    outputs.push(write_text(&ctx.out_dir.join("train_history.csv"), &history_table(&history).to_csv())?);
    manifest.outputs(outputs)?;
    manifest.write(&ctx.out_dir)?;

    println!("trained {} for {} epochs", model.spec.name, cfg.epochs);
    if let Some(v) = &val {
        println!("validation accuracy {:.4}", accuracy(&model, v)?);
    }
    Ok(())
}
