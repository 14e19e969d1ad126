//! Architecture specs, binary containers and cost accounting.

pub mod cost;
pub mod dataset;
pub mod model;
pub mod presets;
pub mod spec;
pub mod weights;

pub use cost::{count_flops, count_kernels};
pub use dataset::LabeledDataset;
pub use model::Model;
pub use spec::{ConvSpec, Layer, ModelSpec, ShapePlan};
pub use weights::WeightStore;
