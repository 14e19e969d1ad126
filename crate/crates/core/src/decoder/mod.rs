//! Genome to sub-model surgery.

pub mod decode;
pub mod genome;
pub mod kernel_set;

pub use decode::{decode, keep_plan, slice_model, KeepPlan, ModuleArtifact};
pub use genome::{repair, retained_kernel_set, Genome};
pub use kernel_set::KernelSet;
