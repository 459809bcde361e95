//! The three mechanism experiments: binary-tree local-vs-global decisions,
//! sequence-pooling versus top-pooling probability estimation, and full
//! training runs.

pub mod sptp;
pub mod train;
pub mod tree;

pub use sptp::{
    branch_outputs, sp_tp_probability, sp_tp_sweep, sp_tp_vgg8, SpTpConfig, VGG8_DEPTHS,
};
pub use train::{evaluate, train, train_spec, EpochStats, TrainConfig, TrainReport};
pub use tree::{
    alphabet_disagreement, disagreement_probability, exhaustive_disagreement, ProbabilityEstimate,
    ValueTree,
};
