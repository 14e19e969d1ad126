//! Dense CNN forward pass and SGD trainer.

pub mod eval;
pub mod forward;
pub mod ops;
pub mod train;

pub use forward::{model_forward, ChannelMask, Forward};
pub use ops::{conv2d_forward, fc_forward, maxpool2d, relu, softmax, ConvLayerWeights};
pub use train::{init_weights, sgd_train, EpochStats, TrainConfig};
