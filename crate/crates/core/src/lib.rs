//! Search-based modularization of trained convolutional classifiers.
//!
//! A trained N-class CNN is decomposed into N per-class modules, each a
//! physically smaller sub-model that keeps only some of the parent's
//! convolution kernels. Modules are found by a genetic search over bit
//! vectors of importance-ordered kernel groups, and a module taken from a
//! strong model can be composed onto a weak model as a patch for one class.
//!
//! Layout:
//! - [`tensor`] and [`engine`]: dense tensors, forward pass, SGD trainer.
//! - [`store`]: model specs, weight/dataset containers, cost accounting.
//! - [`analysis`]: kernel importance, grouping, layer sensitivity.
//! - [`decoder`]: genome to sub-model surgery.
//! - [`search`]: genetic operators and the generation loop.
//! - [`evaluator`]: composed-model metrics and pruned evaluation.
//! - [`patcher`]: calibration and logit replacement.
//! - [`registry`]: named strategies selectable at runtime.

pub mod analysis;
pub mod decoder;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod patcher;
pub mod registry;
pub mod search;
pub mod store;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
