//! Named strategies, resolved at runtime.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::grouping::{build_grouping, groups_for_width, importance_order, GroupingMap};
use crate::analysis::importance::ImportanceTable;
use crate::error::{Error, Result};
use crate::evaluator::{CmEvaluation, ExhaustiveEvaluation, PrunedEvaluation};
use crate::search::{InitStrategy, RandomInit, SensitivityInit};
use crate::store::model::Model;

/// Name-to-factory table for one kind of strategy.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, fn() -> Arc<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    pub fn register(mut self, name: &'static str, make: fn() -> Arc<T>) -> Self {
        self.entries.push((name, make));
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, make)| make())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }
}

/// Builds the kernel grouping a search runs over.
pub trait GroupingStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, model: &Model, importance: &ImportanceTable, seed: u64) -> Result<GroupingMap>;
}

/// Contiguous chunks of the importance ranking.
pub struct ImportanceGrouping;

impl GroupingStrategy for ImportanceGrouping {
    fn name(&self) -> &'static str {
        "importance"
    }

    fn build(&self, model: &Model, importance: &ImportanceTable, _seed: u64) -> Result<GroupingMap> {
        build_grouping(importance, &model.plan, &model.spec.residual_pairs)
    }
}

/// Same group sizes as importance grouping over a random permutation per
/// class and layer.
pub struct RandomGrouping;

impl GroupingStrategy for RandomGrouping {
    fn name(&self) -> &'static str {
        "random"
    }

    fn build(&self, model: &Model, importance: &ImportanceTable, seed: u64) -> Result<GroupingMap> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GroupingMap::from_orders(
            &model.plan,
            &model.spec.residual_pairs,
            importance.num_classes(),
            groups_for_width,
            |_, conv| {
                let mut order: Vec<usize> = (0..model.plan.convs[conv].out_channels).collect();
                order.shuffle(&mut rng);
                order
            },
        )
    }
}

/// One group per kernel, ordered by importance so repair keeps the most
/// important kernel.
pub struct NoGrouping;

impl GroupingStrategy for NoGrouping {
    fn name(&self) -> &'static str {
        "none"
    }

    fn build(&self, model: &Model, importance: &ImportanceTable, _seed: u64) -> Result<GroupingMap> {
        GroupingMap::from_orders(
            &model.plan,
            &model.spec.residual_pairs,
            importance.num_classes(),
            |w| w,
            |class, conv| importance_order(&importance.scores[class][conv]),
        )
    }
}

pub fn grouping_strategies() -> Registry<dyn GroupingStrategy> {
    Registry::<dyn GroupingStrategy>::new("grouping")
        .register("importance", || Arc::new(ImportanceGrouping))
        .register("random", || Arc::new(RandomGrouping))
        .register("none", || Arc::new(NoGrouping))
}

pub fn init_strategies() -> Registry<dyn InitStrategy> {
    Registry::<dyn InitStrategy>::new("init")
        .register("sensitivity", || Arc::new(SensitivityInit))
        .register("random", || Arc::new(RandomInit))
}

pub fn evaluation_strategies() -> Registry<dyn CmEvaluation> {
    Registry::<dyn CmEvaluation>::new("evaluation")
        .register("pruned", || Arc::new(PrunedEvaluation))
        .register("exhaustive", || Arc::new(ExhaustiveEvaluation))
}
