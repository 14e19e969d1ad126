//! Composed-model scoring and the evaluation tree.

pub mod compose;
pub mod metrics;
pub mod tree;

pub use compose::{compose_outputs, ComposedModel};
pub use metrics::{cm_diff, fitness, jaccard_distance};
pub use tree::{
    exhaustive_count, pruned_count, Candidate, CmEvaluation, EvalConfig, EvalOutcome,
    ExhaustiveEvaluation, FitnessRecord, PrunedEvaluation,
};
