use std::path::{Path, PathBuf};

use anyhow::Result;
use modsplit::analysis::{GroupingMap, ImportanceTable, SensitivityProfile};
use modsplit::decoder::{decode, ModuleArtifact};
use modsplit::engine::eval::accuracy;
use modsplit::evaluator::{cm_diff, ComposedModel};
use modsplit::registry::{evaluation_strategies, grouping_strategies, init_strategies};
use modsplit::search::{run_search, SearchConfig, SearchInputs};
use modsplit::store::{count_flops, count_kernels};
use serde::Serialize;

use super::analyze::{IMPORTANCE_FILE, SENSITIVITY_FILE};
use super::{fmt4, Ctx};
use crate::io::{load_dataset, load_model, model_files, read_json, write_json, write_text};
use crate::manifest::ManifestBuilder;
use crate::table::Table;
use crate::ConfigError;

pub const GROUPING_FILE: &str = "grouping.json";

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct SearchArgs {
    /// Population size per class.
    #[arg(long, default_value_t = 100)]
    pub n_i: usize,
    /// Parents kept each generation.
    #[arg(long, default_value_t = 50)]
    pub n_p: usize,
    /// Per-bit mutation probability.
    #[arg(long, default_value_t = 0.1)]
    pub p_m: f64,
    /// Maximum generations.
    #[arg(long, default_value_t = 200)]
    pub generations: usize,
    /// Weight of accuracy against module difference.
    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,
    /// Composed models kept per subtask when pruning.
    #[arg(long, default_value_t = 100)]
    pub n_top: usize,
    /// Generations without improvement before stopping.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory holding spec.txt and weights.cnsp.
    #[arg(long, required_unless_present = "dry_run")]
    pub model: Option<PathBuf>,
    /// Data the fitness is computed on.
    #[arg(long, required_unless_present = "dry_run")]
    pub val: Option<PathBuf>,
    /// Held-out data for the final report (defaults to --val).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Output directory of `analyze`.
    #[arg(long, required_unless_present = "dry_run")]
    pub analysis: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Kernel grouping: importance, random or none.
    #[arg(long, default_value = "importance")]
    pub grouping: String,
    /// Initialization: sensitivity or random.
    #[arg(long, default_value = "sensitivity")]
    pub init: String,
    /// Evaluate every composed model instead of the pruned tree.
    #[arg(long)]
    pub no_pruning: bool,
    /// Largest per-generation evaluation count allowed with --no-pruning.
    #[arg(long, default_value_t = 10_000_000)]
    pub budget: u128,
    /// Print the evaluation plan and exit.
    #[arg(long)]
    pub dry_run: bool,
    /// Class count for a dry run without a model.
    #[arg(long)]
    pub classes: Option<usize>,
}

impl Args {
    pub fn search_config(&self, seed: u64) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            n_i: s.n_i,
            n_p: s.n_p,
            p_m: s.p_m,
            generations: s.generations,
            alpha: s.alpha,
            n_top: s.n_top,
            patience: s.patience,
            seed,
            init_mode: self.init.clone(),
            grouping_mode: self.grouping.clone(),
            evaluation: if self.no_pruning { "exhaustive" } else { "pruned" }.into(),
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    Ok(p.as_deref().ok_or_else(|| ConfigError(format!("{flag} is required")))?)
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let cfg = args.search_config(ctx.seed);
    cfg.validate()?;
    let grouping_strategy = grouping_strategies().get(&cfg.grouping_mode)?;
    let init = init_strategies().get(&cfg.init_mode)?;
    let evaluation = evaluation_strategies().get(&cfg.evaluation)?;

    let model = args.model.as_deref().map(load_model).transpose()?;
    let classes = match (&model, args.classes) {
        (Some(m), _) => m.num_classes(),
        (None, Some(n)) => n,
        (None, None) => return Err(ConfigError("--dry-run without --model needs --classes".into()).into()),
    };
    let per_generation = evaluation.count(&vec![cfg.n_i; classes], cfg.n_top);
    println!(
        "{} evaluation: {per_generation} composed-model evaluations per generation ({classes} classes, n_i {}, n_top {})",
        evaluation.name(),
        cfg.n_i,
        cfg.n_top
    );
    if args.no_pruning && per_generation > args.budget {
        return Err(ConfigError(format!(
            "exhaustive evaluation needs {per_generation} composed models per generation, over the budget of {}",
            args.budget
        ))
        .into());
    }
    if args.dry_run {
        return Ok(());
    }
    let model = model.expect("required without --dry-run");

    let mut manifest = ManifestBuilder::new("modularize", ctx.seed, args)?;
    let model_dir = required(&args.model, "--model")?;
    let val_path = required(&args.val, "--val")?;
    let analysis = required(&args.analysis, "--analysis")?;
    let importance_path = analysis.join(IMPORTANCE_FILE);
    let sensitivity_path = analysis.join(SENSITIVITY_FILE);
    for p in model_files(model_dir).iter().map(PathBuf::as_path).chain([val_path, &importance_path, &sensitivity_path]) {
        manifest.input(p)?;
    }
    let val = load_dataset(val_path)?;
    let test = match &args.test {
        Some(p) => {
            manifest.input(p)?;
            load_dataset(p)?
        }
        None => val.clone(),
    };
    let importance: ImportanceTable = read_json(&importance_path)?;
    let profile: SensitivityProfile = read_json(&sensitivity_path)?;

    let grouping: GroupingMap = grouping_strategy.build(&model, &importance, ctx.seed)?;
    let inputs = SearchInputs {
        model: &model,
        grouping: &grouping,
        profile: &profile,
        val: &val,
    };
    let outcome = manifest.stage("search", || Ok(run_search(&inputs, &cfg, init.as_ref(), evaluation.as_ref())?))?;

    let modules: Vec<ModuleArtifact> = outcome
        .best_genomes
        .iter()
        .map(|g| decode(&model, &grouping, g, true))
        .collect::<modsplit::Result<_>>()?;

    let mut outputs = vec![write_json(&ctx.out_dir.join(GROUPING_FILE), &grouping)?];
    for (n, m) in modules.iter().enumerate() {
        let dir = ctx.out_dir.join(format!("module_{n}"));
        m.save(&dir)?;
        outputs.extend(["spec.txt", "weights.cnsp", "genome.txt"].map(|f| dir.join(f)));
    }

    let mut history = Table::new(&["generation", "class", "best_fitness", "best_acc", "best_diff"]);
    for r in &outcome.history {
        history.push(vec![
            r.generation.to_string(),
            r.class.to_string(),
            format!("{:.6}", r.best_fitness),
            format!("{:.6}", r.best_acc),
            format!("{:.6}", r.best_diff),
        ]);
    }
    outputs.push(write_text(&ctx.out_dir.join("history.csv"), &history.to_csv())?);

    let (parent_acc, composed_acc) = manifest.stage("report", || {
        let composed = ComposedModel::new((0..classes).collect(), modules.iter().map(|m| m.model.clone()).collect())?;
        Ok((accuracy(&model, &test)?, composed.accuracy(&test)?))
    })?;
    let sets: Vec<_> = modules.iter().map(|m| &m.retained).collect();
    let diff = cm_diff(&sets)?;
    let total = model.total_kernels();
    let parent_flops = count_flops(&model.spec)?;

    let mut summary = Table::new(&["model", "acc_parent", "acc_composed", "loss", "diff", "mean_retention"]);
    let retention: Vec<f64> = modules.iter().map(|m| m.retained.len() as f64 / total as f64).collect();
    let mean_retention = retention.iter().sum::<f64>() / retention.len() as f64;
    summary.push(vec![
        model.spec.name.clone(),
        fmt4(parent_acc),
        fmt4(composed_acc),
        fmt4(parent_acc - composed_acc),
        fmt4(diff),
        fmt4(mean_retention),
    ]);
    let mut per_module = Table::new(&["module", "kernels", "retention", "flops", "flops_ratio", "genome"]);
    for (n, m) in modules.iter().enumerate() {
        let flops = count_flops(&m.model.spec)?;
        per_module.push(vec![
            n.to_string(),
            count_kernels(&m.model.spec).to_string(),
            fmt4(retention[n]),
            flops.to_string(),
            fmt4(flops as f64 / parent_flops as f64),
            m.genome.to_bit_string(),
        ]);
    }
    let text = format!(
        "{}\n{}\ngenerations {} ({}), composed-model evaluations {}\n",
        summary.to_text(),
        per_module.to_text(),
        outcome.generations,
        if outcome.stopped_early { "early stop" } else { "limit reached" },
        outcome.evaluations
    );
    outputs.push(write_text(&ctx.out_dir.join("modularize_report.csv"), &summary.to_csv())?);
    outputs.push(write_text(&ctx.out_dir.join("modules.csv"), &per_module.to_csv())?);
    outputs.push(write_text(&ctx.out_dir.join("modularize_report.txt"), &text)?);
    manifest.outputs(outputs)?;
    manifest.write(&ctx.out_dir)?;
    print!("{text}");
    Ok(())
}
