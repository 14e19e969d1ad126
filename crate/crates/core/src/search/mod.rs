//! Genetic search over per-class module genomes.

pub mod config;
pub mod init;
pub mod operators;
pub mod run;

pub use config::SearchConfig;
pub use init::{drop_bits, InitStrategy, RandomInit, SensitivityInit};
pub use operators::{crossover, mutate, select_parents};
pub use run::{build_candidates, run_search, HistoryRow, SearchInputs, SearchOutcome};
