//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::{max_rel_err, naive_forward, random_input, random_model};
use modsplit::analysis::GroupingMap;
use modsplit::decoder::{decode, keep_plan, repair, Genome, KernelSet};
use modsplit::engine::eval::{accuracy, predictions};
use modsplit::engine::ops::softmax_slice;
use modsplit::engine::Forward;
use modsplit::evaluator::{
    fitness, jaccard_distance, pruned_count, Candidate, CmEvaluation, ComposedModel, EvalConfig,
    ExhaustiveEvaluation, PrunedEvaluation,
};
use modsplit::patcher::PatchReport;
use modsplit::search::mutate;
use modsplit::store::{count_flops, presets, LabeledDataset, Model, ModelSpec, WeightStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Cli {
    bin: PathBuf,
}

impl Cli {
    fn run(&self, args: &[&str]) -> Result<String, String> {
        let out = Command::new(&self.bin)
            .args(args)
            .output()
            .map_err(|e| format!("spawning modsplit: {e}"))?;
        if !out.status.success() {
            return Err(format!(
                "modsplit {} failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn load_model(dir: &Path) -> Model {
    let spec = ModelSpec::parse(&fs::read_to_string(dir.join("spec.txt")).unwrap()).unwrap();
    let weights = WeightStore::from_bytes(&fs::read(dir.join("weights.cnsp")).unwrap()).unwrap();
    Model::new(spec, weights).unwrap()
}

fn load_data(path: &Path) -> LabeledDataset {
    LabeledDataset::from_bytes(&fs::read(path).unwrap()).unwrap()
}

const SEARCH: [&str; 8] = ["--n-i", "20", "--n-p", "10", "--generations", "30", "--n-top", "10"];

/// Synthesizes train/val/test splits into `dir/data`.
fn synth(cli: &Cli, dir: &Path, classes: usize, noise: &str) -> Result<(), String> {
    let data = dir.join("data");
    for (seed, per_class, name) in [("1", "200", "train.cnds"), ("2", "60", "val.cnds"), ("3", "100", "test.cnds")] {
        cli.run(&[
            "--seed", seed, "--out-dir", p(&data), "synth", "--classes", &classes.to_string(),
            "--per-class", per_class, "--noise", noise, "--name", name,
        ])?;
    }
    Ok(())
}

/// Trains, analyzes and modularizes the strong model under `dir`.
fn pipeline(cli: &Cli, dir: &Path, threads: &str) -> Result<(), String> {
    let d = |s: &str| dir.join(s);
    cli.run(&[
        "--seed", "0", "--out-dir", p(&d("strong")), "train", "--data", p(&d("data/train.cnds")),
        "--val", p(&d("data/val.cnds")), "--epochs", "30",
    ])?;
    cli.run(&[
        "--out-dir", p(&d("analysis")), "analyze", "--model", p(&d("strong")),
        "--train", p(&d("data/train.cnds")), "--val", p(&d("data/val.cnds")),
    ])?;
    modularize(cli, dir, &d("modules"), threads)
}

fn modularize(cli: &Cli, dir: &Path, out: &Path, threads: &str) -> Result<(), String> {
    let [strong, val, test, analysis] =
        ["strong", "data/val.cnds", "data/test.cnds", "analysis"].map(|s| dir.join(s));
    let mut args = vec![
        "--seed", "0", "--threads", threads, "--out-dir", p(out), "modularize",
        "--model", p(&strong), "--val", p(&val), "--test", p(&test), "--analysis", p(&analysis),
    ];
    args.extend(SEARCH);
    cli.run(&args).map(|_| ())
}

fn modules(dir: &Path, classes: usize) -> Vec<Model> {
    (0..classes).map(|n| load_model(&dir.join(format!("module_{n}")))).collect()
}

fn decode_equivalence(desk: &Path) -> Outcome {
    let start = Instant::now();
    let model = load_model(&desk.join("strong"));
    let grouping: GroupingMap =
        serde_json_read(&desk.join("modules/grouping.json")).map_err(|e| e.to_string())?;
    let convs = model.plan.convs.len();
    if convs != 4 || model.total_kernels() > 64 || !model.spec.residual_pairs.is_empty() {
        return Err(format!("fixture has {convs} convs, {} kernels", model.total_kernels()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let keep = rng.gen_range(0.05..0.95);
        let bits = (0..grouping.total_bits()).map(|_| rng.gen_bool(keep)).collect();
        let genome = repair(&Genome::new(bits, rng.gen_range(0..3)), &grouping);
        let art = decode(&model, &grouping, &genome, false).map_err(|e| e.to_string())?;
        let mask = keep_plan(&grouping, &genome).unwrap().to_mask(&model.conv_widths());
        for _ in 0..20 {
            let x = random_input(&model, &mut rng);
            let a = art.model.forward(&x).unwrap();
            let b = Forward::new(&model).with_mask(&mask).logits(&x).unwrap();
            let b: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
            worst = worst.max(max_rel_err(a.data(), &b));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-5 && secs < 60.0, format!("max relative error {worst:.2e} over 2000 pairs in {secs:.1}s"))
}

fn serde_json_read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Box<dyn std::error::Error>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn residual_decode() -> Outcome {
    use modsplit::analysis::groups_for_width;
    use rand::seq::SliceRandom;
    let model = random_model(&presets::rescnn_desk_text(3), 202);
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let grouping = GroupingMap::from_orders(
        &model.plan,
        &model.spec.residual_pairs,
        3,
        groups_for_width,
        |_, conv| {
            let mut o: Vec<usize> = (0..model.plan.convs[conv].out_channels).collect();
            o.shuffle(&mut rng);
            o
        },
    )
    .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let bits = (0..grouping.total_bits()).map(|_| rng.gen_bool(0.5)).collect();
        let genome = repair(&Genome::new(bits, rng.gen_range(0..3)), &grouping);
        let art = decode(&model, &grouping, &genome, false).map_err(|e| e.to_string())?;
        let x = random_input(&model, &mut rng);
        worst = worst.max(max_rel_err(art.model.forward(&x).unwrap().data(), &naive_forward(&art.model, x.data())));
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} over 50 pairs"))
}

fn identity_composition(desk: &Path) -> Outcome {
    let model = load_model(&desk.join("strong"));
    let grouping: GroupingMap =
        serde_json_read(&desk.join("modules/grouping.json")).map_err(|e| e.to_string())?;
    let test = load_data(&desk.join("data/test.cnds"));
    let mods = (0..3)
        .map(|n| decode(&model, &grouping, &Genome::ones(grouping.total_bits(), n), false).map(|a| a.model))
        .collect::<modsplit::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let cm = ComposedModel::new(vec![0, 1, 2], mods).unwrap();
    let parent_preds = predictions(&model, &test).unwrap();
    let same = (0..test.len()).all(|i| cm.predict(&test.image(i)).unwrap() == parent_preds[i]);
    let (a, b) = (accuracy(&model, &test).unwrap(), cm.accuracy(&test).unwrap());
    check(same && a == b, format!("parent {a:.4}, composed {b:.4}, identical predictions: {same}"))
}

fn desk_quality(desk: &Path, secs: f64) -> Outcome {
    let model = load_model(&desk.join("strong"));
    let val = load_data(&desk.join("data/val.cnds"));
    let test = load_data(&desk.join("data/test.cnds"));
    let val_acc = accuracy(&model, &val).unwrap();
    let parent = accuracy(&model, &test).unwrap();
    let mods = modules(&desk.join("modules"), 3);
    let retention: f64 =
        mods.iter().map(|m| m.total_kernels() as f64 / model.total_kernels() as f64).sum::<f64>() / 3.0;
    let composed = ComposedModel::new(vec![0, 1, 2], mods).unwrap().accuracy(&test).unwrap();
    let loss = parent - composed;
    check(
        val_acc >= 0.90 && loss <= 0.05 && retention <= 0.85 && secs < 900.0,
        format!(
            "val acc {val_acc:.4}, test acc {parent:.4} -> composed {composed:.4} (loss {loss:.4}), \
             mean retention {retention:.4}, {secs:.0}s"
        ),
    )
}

/// Four classes, two genomes each. Genome i of class a shares a kernel
/// with genome j of class b (a != b) only when i != j, and every module
/// is a perfect detector, so same-index compositions have the largest
/// Diff. The two leaf composites kept per subtask are (0,0) and (1,1),
/// which cover every genome and contain each genome's exhaustive optimum.
fn non_binding_instance() -> (Vec<Vec<Candidate>>, Vec<usize>) {
    let labels: Vec<usize> = (0..12).map(|s| s % 4).collect();
    let mut sets: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); 2]; 4];
    for c in 0..4 {
        sets[c][0].push(100 + c);
        sets[c][1].push(200 + c);
    }
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                let shared = 10 * a + b;
                sets[a][0].push(shared);
                sets[b][1].push(shared);
            }
        }
    }
    let pops = (0..4)
        .map(|c| {
            (0..2)
                .map(|i| Candidate {
                    own_logits: labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect(),
                    kernels: sets[c][i].iter().copied().collect::<KernelSet>(),
                })
                .collect()
        })
        .collect();
    (pops, labels)
}

fn pruning_count(cli: &Cli) -> Outcome {
    let out = cli.run(&["modularize", "--dry-run", "--classes", "10", "--n-i", "100", "--n-top", "100"])?;
    let printed = out.contains(" 90000 composed-model evaluations per generation");
    let law = pruned_count(&[100; 10], 100) == 9 * 100 * 100;

    let (pops, labels) = non_binding_instance();
    let cfg = EvalConfig { alpha: 0.9, n_top: 2 };
    let pruned = PrunedEvaluation.evaluate(&pops, &labels, &cfg).map_err(|e| e.to_string())?;
    let full = ExhaustiveEvaluation.evaluate(&pops, &labels, &cfg).map_err(|e| e.to_string())?;
    let mut agree = true;
    for (p, f) in pruned.genome_fitness.iter().flatten().zip(full.genome_fitness.iter().flatten()) {
        let (p, f) = (p.as_ref().unwrap(), f.as_ref().unwrap());
        agree &= p.level == 4 && p.fitness == f.fitness;
    }
    check(
        printed && law && agree && pruned.evaluations == 4 + 4 + 4,
        format!(
            "dry run printed 9x100^2: {printed}; closed form: {law}; N=4 pruned == exhaustive on all 8 genomes: {agree} \
             ({} vs {} evaluations)",
            pruned.evaluations, full.evaluations
        ),
    )
}

fn worst_class(report: &str) -> usize {
    let mut worst = (0, f64::INFINITY);
    for line in report.lines().skip(2) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if let (Some(c), Some(f1)) = (cells.first(), cells.get(4)) {
            if let (Ok(c), Ok(f1)) = (c.parse::<usize>(), f1.parse::<f64>()) {
                if f1 < worst.1 {
                    worst = (c, f1);
                }
            }
        }
    }
    worst.0
}

fn patching(cli: &Cli, dir: &Path) -> Outcome {
    let d = |s: &str| dir.join(s);
    synth(cli, dir, 5, "0.6")?;
    pipeline(cli, dir, "0")?;
    let mut details = Vec::new();
    let mut passed = 0;
    for seed in ["11", "12", "13"] {
        let weak = d(&format!("weak{seed}"));
        cli.run(&[
            "--seed", seed, "--out-dir", p(&weak), "train", "--data", p(&d("data/train.cnds")),
            "--weak", "overfit", "--limit", "50", "--epochs", "100", "--batch-size", "8",
        ])?;
        let eval = cli.run(&["--out-dir", p(&weak), "eval", "--model", p(&weak), "--data", p(&d("data/test.cnds"))])?;
        let tc = worst_class(&eval);
        let out = d(&format!("patch{seed}"));
        cli.run(&[
            "--out-dir", p(&out), "patch", "--weak", p(&weak), "--module", p(&d(&format!("modules/module_{tc}"))),
            "--train", p(&d("data/train.cnds")), "--test", p(&d("data/test.cnds")), "--tc", &tc.to_string(),
        ])?;
        let r: PatchReport = serde_json_read(&out.join("patch_report.json")).map_err(|e| e.to_string())?;
        let (f0, f1) = (r.tc_weak().f1.unwrap(), r.tc_patched().f1.unwrap());
        let ok = f1 > f0 && r.non_tc_accuracy_delta() >= -0.01;
        passed += usize::from(ok);
        details.push(format!(
            "seed {seed} tc {tc}: F1 {f0:.4} -> {f1:.4}, non-TC {:+.4}",
            r.non_tc_accuracy_delta()
        ));
    }
    check(passed >= 2, format!("{passed}/3 seeds; {}", details.join("; ")))
}

fn metric_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let set = |rng: &mut ChaCha8Rng| -> KernelSet {
        let n = rng.gen_range(1..15);
        (0..n).map(|_| rng.gen_range(0..30)).collect()
    };
    let mut laws = true;
    for _ in 0..2000 {
        let (a, b, c) = (set(&mut rng), set(&mut rng), set(&mut rng));
        let ab = jaccard_distance(&a, &b);
        laws &= ab == jaccard_distance(&b, &a)
            && jaccard_distance(&a, &a) == 0.0
            && (ab == 0.0) == (a == b)
            && jaccard_distance(&a, &c) <= ab + jaccard_distance(&b, &c) + 1e-12;
    }
    let eq5 = (fitness(0.8607, 0.5277, 0.9).unwrap() - 0.82740).abs() < 5e-6;
    let mut softmax_ok = true;
    for _ in 0..500 {
        let xs: Vec<f32> = (0..10).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let s = softmax_slice(&xs);
        let sum: f64 = s.iter().map(|&v| v as f64).sum();
        softmax_ok &= (sum - 1.0).abs() < 1e-5 && s.iter().all(|&v| v >= 0.0);
    }
    let one_conv = ModelSpec::parse("classes = 2\ninput = 1x4x4\nlayers:\nconv out=1 kernel=3\nflatten\nfc out=2\n").unwrap();
    let fc_only = ModelSpec::parse("classes = 10\ninput = 10x1x1\nlayers:\nflatten\nfc out=10\n").unwrap();
    let flops = count_flops(&one_conv).unwrap() == 2 * 9 * 4 + 2 * 4 * 2 && count_flops(&fc_only).unwrap() == 200;
    let g = GroupingMap::from_orders(
        &ModelSpec::parse("classes = 2\ninput = 1x2x2\nlayers:\nconv out=1000 kernel=1\nflatten\nfc out=2\n")
            .unwrap()
            .infer_shapes()
            .unwrap(),
        &[],
        1,
        |w| w,
        |_, _| (0..1000).collect(),
    )
    .unwrap();
    let base = Genome::ones(1000, 0);
    let flips: usize = (0..100)
        .map(|_| mutate(&base, 0.1, &g, &mut rng).bits.iter().filter(|&&b| !b).count())
        .sum();
    let rate = flips as f64 / 1e5;
    check(
        laws && eq5 && softmax_ok && flops && (rate - 0.1).abs() <= 0.01,
        format!(
            "Jaccard laws {laws}, fitness 0.82740 {eq5}, softmax {softmax_ok}, FLOPs {flops}, mutation rate {rate:.4}"
        ),
    )
}

fn determinism(cli: &Cli, desk: &Path) -> Outcome {
    let other = desk.join("modules_8");
    modularize(cli, desk, &other, "8")?;
    let first = desk.join("modules");
    let mut files = vec![PathBuf::from("grouping.json"), PathBuf::from("history.csv")];
    for n in 0..3 {
        for f in ["spec.txt", "weights.cnsp", "genome.txt"] {
            files.push(PathBuf::from(format!("module_{n}")).join(f));
        }
    }
    let differing: Vec<String> = files
        .iter()
        .filter(|f| fs::read(first.join(f)).ok() != fs::read(other.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    check(
        differing.is_empty(),
        format!("{} artifacts compared, differing: {:?}", files.len(), differing),
    )
}

fn main() {
    let cli = Cli {
        bin: PathBuf::from(env!("CARGO_BIN_EXE_modsplit")),
    };
    let root = tempfile::tempdir().expect("temp dir");
    let desk = root.path().join("desk");

    let start = Instant::now();
    let setup = synth(&cli, &desk, 3, "0.35").and_then(|_| pipeline(&cli, &desk, "1"));
    let desk_secs = start.elapsed().as_secs_f64();

    let needs_desk = |f: &dyn Fn() -> Outcome| match &setup {
        Ok(()) => f(),
        Err(e) => Err(format!("desk pipeline failed: {e}")),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("decode equivalence", needs_desk(&|| decode_equivalence(&desk))),
        ("residual decode", residual_decode()),
        ("identity composition", needs_desk(&|| identity_composition(&desk))),
        ("desk modularization quality", needs_desk(&|| desk_quality(&desk, desk_secs))),
        ("pruning-count law", pruning_count(&cli)),
        ("patching improves TC", patching(&cli, &root.path().join("patch"))),
        ("metric and unit suites", metric_suites()),
        ("determinism across thread counts", needs_desk(&|| determinism(&cli, &desk))),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
