//! Kernel importance, kernel grouping, and layer sensitivity.

pub mod grouping;
pub mod importance;
pub mod sensitivity;

pub use grouping::{build_grouping, groups_for_width, GroupingMap, Segment};
pub use importance::{importance_table, kernel_importance, ImportanceTable, DEFAULT_SAMPLE_CAP};
pub use sensitivity::{layer_sensitivity, LayerSensitivity, SensitivityProfile, DROP_RATIOS};
