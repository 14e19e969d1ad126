use std::collections::HashMap;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::grouping::GroupingMap;
use crate::analysis::sensitivity::SensitivityProfile;
use crate::decoder::{decode, Genome};
use crate::error::{Error, Result};
use crate::evaluator::{Candidate, CmEvaluation, EvalConfig, FitnessRecord};
use crate::search::config::SearchConfig;
use crate::search::init::InitStrategy;
use crate::search::operators::{crossover, mutate, select_parents};
use crate::store::dataset::LabeledDataset;
use crate::store::model::Model;

pub struct SearchInputs<'a> {
    pub model: &'a Model,
    pub grouping: &'a GroupingMap,
    pub profile: &'a SensitivityProfile,
    pub val: &'a LabeledDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub generation: usize,
    pub class: usize,
    pub best_fitness: f64,
    pub best_acc: f64,
    pub best_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Members of the best composed model seen, one per class.
    pub best_genomes: Vec<Genome>,
    pub best: FitnessRecord,
    pub history: Vec<HistoryRow>,
    pub generations: usize,
    pub stopped_early: bool,
    pub evaluations: u128,
}

/// Decodes every distinct genome once and records its own-class logits on
/// `val` along with its retained kernels.
pub fn build_candidates(
    model: &Model,
    grouping: &GroupingMap,
    val: &LabeledDataset,
    pops: &[Vec<Genome>],
) -> Result<Vec<Vec<Candidate>>> {
    let mut slot: HashMap<&Genome, usize> = HashMap::new();
    let mut unique: Vec<&Genome> = Vec::new();
    let index: Vec<Vec<usize>> = pops
        .iter()
        .map(|pop| {
            pop.iter()
                .map(|g| {
                    *slot.entry(g).or_insert_with(|| {
                        unique.push(g);
                        unique.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    let built: Vec<Candidate> = unique
        .par_iter()
        .map(|g| {
            let art = decode(model, grouping, g, true)?;
            let own_logits = (0..val.len())
                .map(|i| Ok(art.model.forward(&val.image(i))?.data()[g.class_id]))
                .collect::<Result<Vec<f32>>>()?;
            Ok(Candidate {
                own_logits,
                kernels: art.retained,
            })
        })
        .collect::<Result<_>>()?;
    Ok(index
        .into_iter()
        .map(|row| row.into_iter().map(|i| built[i].clone()).collect())
        .collect())
}

fn next_population(
    pop: &[Genome],
    parents: &[usize],
    cfg: &SearchConfig,
    grouping: &GroupingMap,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Genome>> {
    let len = grouping.total_bits();
    let mut children = Vec::with_capacity(cfg.n_i + 1);
    while children.len() < cfg.n_i {
        let a = rng.gen_range(0..parents.len());
        let b = if parents.len() > 1 {
            let b = rng.gen_range(0..parents.len() - 1);
            if b >= a {
                b + 1
            } else {
                b
            }
        } else {
            a
        };
        let (pa, pb) = (&pop[parents[a]], &pop[parents[b]]);
        if len > 1 {
            let (x, y) = crossover(pa, pb, rng.gen_range(1..len))?;
            children.push(x);
            children.push(y);
        } else {
            children.push(pa.clone());
            children.push(pb.clone());
        }
    }
    children.truncate(cfg.n_i);
    Ok(children
        .iter()
        .map(|c| mutate(c, cfg.p_m, grouping, rng))
        .collect())
}

/// Runs the generation loop. All random draws come from one stream seeded
/// by `cfg.seed`, so results do not depend on thread count.
pub fn run_search(
    inputs: &SearchInputs,
    cfg: &SearchConfig,
    init: &dyn InitStrategy,
    evaluation: &dyn CmEvaluation,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let grouping = inputs.grouping;
    let classes = grouping.num_classes();
    if classes != inputs.model.num_classes() {
        return Err(Error::Config(format!(
            "grouping has {classes} classes, model has {}",
            inputs.model.num_classes()
        )));
    }
    let labels = inputs.val.labels();
    let eval_cfg = EvalConfig {
        alpha: cfg.alpha,
        n_top: cfg.n_top,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pops: Vec<Vec<Genome>> = (0..classes)
        .map(|n| init.population(grouping, inputs.profile, n, cfg.n_i, &mut rng))
        .collect();

    let mut best: Option<(FitnessRecord, Vec<Genome>)> = None;
    let mut class_best: Vec<Option<FitnessRecord>> = vec![None; classes];
    let mut history = Vec::new();
    let mut evaluations = 0u128;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut generation = 0;

    loop {
        let current = generation;
        let wrap = move |e: Error| Error::Generation {
            generation: current,
            source: Box::new(e),
        };
        let cands = build_candidates(inputs.model, grouping, inputs.val, &pops).map_err(wrap)?;
        let out = evaluation.evaluate(&cands, labels, &eval_cfg).map_err(wrap)?;
        evaluations += out.evaluations;

        let improved = best.as_ref().map_or(true, |(b, _)| out.best.fitness > b.fitness);
        if improved {
            let genomes = out
                .best
                .members
                .iter()
                .enumerate()
                .map(|(n, &g)| pops[n][g].clone())
                .collect();
            best = Some((out.best.clone(), genomes));
            stale = 0;
        } else {
            stale += 1;
        }
        for (n, row) in out.genome_fitness.iter().enumerate() {
            for rec in row.iter().flatten() {
                if rec.beats(class_best[n].as_ref()) {
                    class_best[n] = Some(rec.clone());
                }
            }
            let b = class_best[n].as_ref().expect("every class has a record");
            history.push(HistoryRow {
                generation,
                class: n,
                best_fitness: b.fitness,
                best_acc: b.acc,
                best_diff: b.diff,
            });
        }
        let (b, _) = best.as_ref().expect("set above");
        info!(
            "generation {generation}: best {:.4} (acc {:.4}, diff {:.4}), this generation {:.4}",
            b.fitness, b.acc, b.diff, out.best.fitness
        );

        generation += 1;
        if generation >= cfg.generations {
            break;
        }
        if stale >= cfg.patience {
            stopped_early = true;
            debug!("no improvement for {stale} generations");
            break;
        }

        for (n, row) in out.genome_fitness.iter().enumerate() {
            let keys: Vec<Option<(usize, f64)>> =
                row.iter().map(|r| r.as_ref().map(|r| (r.level, r.fitness))).collect();
            let parents = select_parents(&keys, cfg.n_p).map_err(wrap)?;
            pops[n] = next_population(&pops[n], &parents, cfg, grouping, &mut rng).map_err(wrap)?;
        }
    }

    let (best, best_genomes) = best.expect("at least one generation ran");
    Ok(SearchOutcome {
        best_genomes,
        best,
        history,
        generations: generation,
        stopped_early,
        evaluations,
    })
}
