use std::cmp::Ordering;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::KernelSet;
use crate::error::{Error, Result};
use crate::evaluator::metrics::{check_alpha, jaccard_distance, weighted};

/// What the evaluator needs from one decoded module: its own-class logit on
/// every evaluation sample, and its retained kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub own_logits: Vec<f32>,
    pub kernels: KernelSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub alpha: f64,
    pub n_top: usize,
}

/// Score of one composed model. Classes are the contiguous range starting
/// at `first_class`; `members[k]` is the genome chosen for class
/// `first_class + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub acc: f64,
    pub diff: f64,
    pub fitness: f64,
    pub level: usize,
    pub index: u64,
    pub first_class: usize,
    pub members: Vec<usize>,
}

impl FitnessRecord {
    /// Higher level wins, then higher fitness, then the lower CM index.
    pub fn rank(&self, other: &FitnessRecord) -> Ordering {
        self.level
            .cmp(&other.level)
            .then(self.fitness.total_cmp(&other.fitness))
            .then(other.index.cmp(&self.index))
    }

    pub fn beats(&self, other: Option<&FitnessRecord>) -> bool {
        other.map_or(true, |o| self.rank(o) == Ordering::Greater)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// `[class][genome]`: the best record among CMs containing the genome.
    pub genome_fitness: Vec<Vec<Option<FitnessRecord>>>,
    /// Best composed model covering every class.
    pub best: FitnessRecord,
    pub evaluations: u128,
}

/// A strategy for assigning fitness to every genome of every class.
pub trait CmEvaluation: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of CM evaluations a run over these population sizes performs.
    fn count(&self, pop_sizes: &[usize], n_top: usize) -> u128;

    fn evaluate(
        &self,
        pops: &[Vec<Candidate>],
        labels: &[usize],
        cfg: &EvalConfig,
    ) -> Result<EvalOutcome>;
}

struct Scorer<'a> {
    pops: &'a [Vec<Candidate>],
    labels: &'a [usize],
    alpha: f64,
}

impl Scorer<'_> {
    fn new<'a>(pops: &'a [Vec<Candidate>], labels: &'a [usize], cfg: &EvalConfig) -> Result<Scorer<'a>> {
        check_alpha(cfg.alpha)?;
        if pops.len() < 2 {
            return Err(Error::Config(format!("evaluation needs at least 2 classes, got {}", pops.len())));
        }
        for (class, pop) in pops.iter().enumerate() {
            if pop.is_empty() {
                return Err(Error::Config(format!("class {class} has an empty population")));
            }
            if let Some(c) = pop.iter().find(|c| c.own_logits.len() != labels.len()) {
                return Err(Error::Shape(format!(
                    "class {class} candidate has {} logits for {} samples",
                    c.own_logits.len(),
                    labels.len()
                )));
            }
        }
        Ok(Scorer {
            pops,
            labels,
            alpha: cfg.alpha,
        })
    }

    fn samples(&self, first: usize, len: usize) -> Result<Vec<usize>> {
        let s: Vec<usize> = (0..self.labels.len())
            .filter(|&i| (first..first + len).contains(&self.labels[i]))
            .collect();
        if s.is_empty() {
            return Err(Error::NoClassSamples(first));
        }
        Ok(s)
    }

    fn score(&self, first: usize, members: &[usize], samples: &[usize], level: usize, index: u64) -> FitnessRecord {
        let cands: Vec<&Candidate> = members
            .iter()
            .enumerate()
            .map(|(k, &g)| &self.pops[first + k][g])
            .collect();
        let mut hits = 0usize;
        for &s in samples {
            let mut best = 0;
            for k in 1..cands.len() {
                if cands[k].own_logits[s] > cands[best].own_logits[s] {
                    best = k;
                }
            }
            if first + best == self.labels[s] {
                hits += 1;
            }
        }
        let acc = hits as f64 / samples.len() as f64;
        let n = cands.len();
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += jaccard_distance(&cands[i].kernels, &cands[j].kernels);
            }
        }
        let diff = sum * 2.0 / (n * (n - 1)) as f64;
        FitnessRecord {
            acc,
            diff,
            fitness: weighted(acc, diff, self.alpha),
            level,
            index,
            first_class: first,
            members: members.to_vec(),
        }
    }
}

type Table = Vec<Vec<Option<FitnessRecord>>>;

fn credit(table: &mut Table, rec: &FitnessRecord) {
    for (k, &g) in rec.members.iter().enumerate() {
        let slot = &mut table[rec.first_class + k][g];
        if rec.beats(slot.as_ref()) {
            *slot = Some(rec.clone());
        }
    }
}

/// Leaf class groups: ascending pairs, the last taking three when odd.
fn leaves(n: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n / 2).map(|i| (2 * i, 2)).collect();
    if n % 2 == 1 {
        if let Some(last) = out.last_mut() {
            last.1 = 3;
        }
    }
    out
}

/// Merges adjacent nodes round by round, carrying an odd node upward.
fn reduce_tree<T>(mut nodes: Vec<T>, mut merge: impl FnMut(T, T) -> Result<T>) -> Result<T> {
    while nodes.len() > 1 {
        let mut next = Vec::with_capacity(nodes.len().div_ceil(2));
        let mut it = nodes.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)?),
                None => next.push(a),
            }
        }
        nodes = next;
    }
    Ok(nodes.pop().expect("tree has at least one node"))
}

fn product(sizes: &[usize]) -> u128 {
    sizes.iter().map(|&s| s as u128).product()
}

/// Closed-form evaluation count of the pruned tree.
pub fn pruned_count(pop_sizes: &[usize], n_top: usize) -> u128 {
    if pop_sizes.len() < 2 {
        return 0;
    }
    let mut total = 0u128;
    let kept: Vec<u128> = leaves(pop_sizes.len())
        .into_iter()
        .map(|(first, len)| {
            let c = product(&pop_sizes[first..first + len]);
            total += c;
            c.min(n_top as u128)
        })
        .collect();
    reduce_tree(kept, |a, b| {
        total += a * b;
        Ok((a * b).min(n_top as u128))
    })
    .expect("counting cannot fail");
    total
}

pub fn exhaustive_count(pop_sizes: &[usize]) -> u128 {
    product(pop_sizes)
}

/// Mixed-radix decode of a CM index, last class varying fastest.
fn members_of(mut index: u64, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for k in (0..sizes.len()).rev() {
        out[k] = (index % sizes[k] as u64) as usize;
        index /= sizes[k] as u64;
    }
    out
}

fn index_count(sizes: &[usize]) -> Result<u64> {
    u64::try_from(product(sizes))
        .map_err(|_| Error::Config("too many composed models to enumerate".into()))
}

/// Leaf subtasks evaluated in full, then a top-`n_top` beam merged up a
/// balanced tree.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrunedEvaluation;

struct Node {
    first: usize,
    len: usize,
    kept: Vec<Vec<usize>>,
}

impl PrunedEvaluation {
    fn level(
        scorer: &Scorer,
        table: &mut Table,
        first: usize,
        len: usize,
        combos: &[Vec<usize>],
        n_top: usize,
    ) -> Result<(Vec<FitnessRecord>, Vec<Vec<usize>>)> {
        let samples = scorer.samples(first, len)?;
        let records: Vec<FitnessRecord> = combos
            .par_iter()
            .enumerate()
            .map(|(i, m)| scorer.score(first, m, &samples, len, i as u64))
            .collect();
        for r in &records {
            credit(table, r);
        }
        if n_top > records.len() {
            warn!(
                "beam of {n_top} exceeds the {} composed models for classes {first}..{}",
                records.len(),
                first + len
            );
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| records[b].fitness.total_cmp(&records[a].fitness).then(a.cmp(&b)));
        order.truncate(n_top);
        let kept = order.iter().map(|&i| records[i].members.clone()).collect();
        Ok((records, kept))
    }
}

impl CmEvaluation for PrunedEvaluation {
    fn name(&self) -> &'static str {
        "pruned"
    }

    fn count(&self, pop_sizes: &[usize], n_top: usize) -> u128 {
        pruned_count(pop_sizes, n_top)
    }

    fn evaluate(&self, pops: &[Vec<Candidate>], labels: &[usize], cfg: &EvalConfig) -> Result<EvalOutcome> {
        if cfg.n_top == 0 {
            return Err(Error::Config("n_top must be positive".into()));
        }
        let scorer = Scorer::new(pops, labels, cfg)?;
        let n = pops.len();
        let sizes: Vec<usize> = pops.iter().map(Vec::len).collect();
        let mut table: Table = sizes.iter().map(|&s| vec![None; s]).collect();
        let mut evaluations = 0u128;
        let mut last = Vec::new();

        let mut nodes = Vec::new();
        for (first, len) in leaves(n) {
            let combos: Vec<Vec<usize>> = (0..index_count(&sizes[first..first + len])?)
                .map(|i| members_of(i, &sizes[first..first + len]))
                .collect();
            evaluations += combos.len() as u128;
            let (records, kept) = Self::level(&scorer, &mut table, first, len, &combos, cfg.n_top)?;
            last = records;
            nodes.push(Node { first, len, kept });
        }
        reduce_tree(nodes, |a, b| {
            let combos: Vec<Vec<usize>> = a
                .kept
                .iter()
                .flat_map(|x| b.kept.iter().map(move |y| [x.as_slice(), y].concat()))
                .collect();
            evaluations += combos.len() as u128;
            let len = a.len + b.len;
            let (records, kept) = Self::level(&scorer, &mut table, a.first, len, &combos, cfg.n_top)?;
            last = records;
            Ok(Node {
                first: a.first,
                len,
                kept,
            })
        })?;

        let best = best_of(&last);
        Ok(EvalOutcome {
            genome_fitness: table,
            best,
            evaluations,
        })
    }
}

fn best_of(records: &[FitnessRecord]) -> FitnessRecord {
    records
        .iter()
        .reduce(|a, b| if b.rank(a) == Ordering::Greater { b } else { a })
        .expect("final level is non-empty")
        .clone()
}

/// Every cross-class combination at full size.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveEvaluation;

impl CmEvaluation for ExhaustiveEvaluation {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn count(&self, pop_sizes: &[usize], _n_top: usize) -> u128 {
        exhaustive_count(pop_sizes)
    }

    fn evaluate(&self, pops: &[Vec<Candidate>], labels: &[usize], cfg: &EvalConfig) -> Result<EvalOutcome> {
        let scorer = Scorer::new(pops, labels, cfg)?;
        let n = pops.len();
        let sizes: Vec<usize> = pops.iter().map(Vec::len).collect();
        let total = index_count(&sizes)?;
        let samples = scorer.samples(0, n)?;
        let empty = || -> (Table, Option<FitnessRecord>) {
            (sizes.iter().map(|&s| vec![None; s]).collect(), None)
        };
        let (table, best) = (0..total)
            .into_par_iter()
            .fold(empty, |(mut table, best), i| {
                let rec = scorer.score(0, &members_of(i, &sizes), &samples, n, i);
                credit(&mut table, &rec);
                let best = if rec.beats(best.as_ref()) { Some(rec) } else { best };
                (table, best)
            })
            .reduce(empty, |(mut ta, ba), (tb, bb)| {
                for row in tb {
                    for rec in row.into_iter().flatten() {
                        credit(&mut ta, &rec);
                    }
                }
                let best = match (ba, bb) {
                    (Some(a), Some(b)) => Some(if b.rank(&a) == Ordering::Greater { b } else { a }),
                    (a, b) => a.or(b),
                };
                (ta, best)
            });
        Ok(EvalOutcome {
            genome_fitness: table,
            best: best.expect("at least one composed model"),
            evaluations: total as u128,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pops(classes: usize, n_i: usize, samples: usize, seed: u64) -> (Vec<Vec<Candidate>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..samples).map(|i| i % classes).collect();
        let pops = (0..classes)
            .map(|_| {
                (0..n_i)
                    .map(|_| Candidate {
                        own_logits: (0..samples).map(|_| rng.gen_range(-4i32..4) as f32).collect(),
                        kernels: (0..24).filter(|_| rng.gen_bool(0.5)).collect(),
                    })
                    .collect()
            })
            .collect();
        (pops, labels)
    }

    #[test]
    fn full_scale_count() {
        assert_eq!(pruned_count(&[100; 10], 100), 9 * 100 * 100);
        assert_eq!(PrunedEvaluation.count(&[100; 10], 100), 90_000);
        assert_eq!(exhaustive_count(&[100; 10]), 10u128.pow(20));
    }

    #[test]
    fn odd_class_counts() {
        // one leaf of three classes
        assert_eq!(pruned_count(&[4; 3], 5), 64);
        // leaves {0,1} {2,3,4}: 16 + 64, then a 5 x 5 merge
        assert_eq!(pruned_count(&[4; 5], 5), 16 + 64 + 25);
    }

    #[test]
    fn two_classes_is_a_single_leaf() {
        let (pops, labels) = random_pops(2, 5, 12, 1);
        let cfg = EvalConfig { alpha: 0.9, n_top: 3 };
        let out = PrunedEvaluation.evaluate(&pops, &labels, &cfg).unwrap();
        assert_eq!(out.evaluations, 25);
        assert!(out.genome_fitness.iter().flatten().all(|r| r.as_ref().unwrap().level == 2));
    }

    #[test]
    fn evaluated_count_matches_closed_form() {
        for (classes, n_i, n_top) in [(4, 3, 4), (5, 3, 2), (7, 2, 3), (3, 4, 100)] {
            let (pops, labels) = random_pops(classes, n_i, 21, 7);
            let cfg = EvalConfig { alpha: 0.9, n_top };
            let out = PrunedEvaluation.evaluate(&pops, &labels, &cfg).unwrap();
            assert_eq!(out.evaluations, pruned_count(&vec![n_i; classes], n_top));
        }
    }

    #[test]
    fn accuracy_matches_tally() {
        let (pops, labels) = random_pops(3, 2, 30, 3);
        let cfg = EvalConfig { alpha: 0.5, n_top: 10 };
        let out = ExhaustiveEvaluation.evaluate(&pops, &labels, &cfg).unwrap();
        let m = &out.best.members;
        let mut hits = 0;
        for (s, &label) in labels.iter().enumerate() {
            let outputs: Vec<f32> = (0..3).map(|c| pops[c][m[c]].own_logits[s]).collect();
            hits += usize::from(crate::tensor::argmax(&outputs) == label);
        }
        assert_eq!(out.best.acc, hits as f64 / labels.len() as f64);
        assert!((out.best.fitness - (0.5 * out.best.acc + 0.5 * out.best.diff)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let (pops, labels) = random_pops(2, 2, 4, 0);
        assert!(PrunedEvaluation.evaluate(&pops, &labels, &EvalConfig { alpha: 1.0, n_top: 2 }).is_err());
        assert!(PrunedEvaluation.evaluate(&pops[..1], &labels, &EvalConfig { alpha: 0.5, n_top: 2 }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn unbinding_beam_matches_exhaustive(seed in any::<u64>(), n_i in 1usize..4) {
            let (pops, labels) = random_pops(4, n_i, 16, seed);
            let cfg = EvalConfig { alpha: 0.9, n_top: n_i * n_i };
            let pruned = PrunedEvaluation.evaluate(&pops, &labels, &cfg).unwrap();
            let full = ExhaustiveEvaluation.evaluate(&pops, &labels, &cfg).unwrap();
            for (p, f) in pruned.genome_fitness.iter().flatten().zip(full.genome_fitness.iter().flatten()) {
                prop_assert_eq!(p.as_ref().unwrap().fitness, f.as_ref().unwrap().fitness);
            }
            prop_assert_eq!(pruned.best.fitness, full.best.fitness);
        }

        #[test]
        fn parallel_reduction_is_deterministic(seed in any::<u64>()) {
            let (pops, labels) = random_pops(3, 3, 12, seed);
            let cfg = EvalConfig { alpha: 0.9, n_top: 4 };
            let a = ExhaustiveEvaluation.evaluate(&pops, &labels, &cfg).unwrap();
            let b = ExhaustiveEvaluation.evaluate(&pops, &labels, &cfg).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
