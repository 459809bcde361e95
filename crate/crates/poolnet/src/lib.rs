//! A CPU engine for convolutional networks built around one question: where
//! should pooling go, and what does its placement do to the decisions a
//! network makes?
//!
//! The crate provides
//!
//! - dense `f64` tensors and exact forward/backward passes for convolution,
//!   batch normalization, fully connected layers, and softmax cross-entropy
//!   ([`tensor`], [`layers`]);
//! - stacks of non-overlapping max/average pooling operators with exact
//!   backprop route tracing, which makes the local-vs-delocalized structure
//!   of a pooling arrangement visible ([`pooling`]);
//! - an architecture family (`A-LeNet5`, `A-VGG`) defined by pooling
//!   placement, with the published training schedules ([`arch`], [`optim`]);
//! - the mechanism experiments: greedy-vs-global decisions on value trees,
//!   and sequence-pooling vs top-pooling probability estimation
//!   ([`experiments`]);
//! - a CIFAR-10 pipeline with preprocessing and augmentation ([`data`]), a
//!   finite-difference gradient oracle ([`gradcheck`]), and atomic JSON/CSV
//!   reporting ([`report`]).
//!
//! # Tracing backprop routes through a pooling stack
//!
//! A stack like `AP3,MP2` (average pooling applied first, nearest the input)
//! reduces a 6x6 window to a scalar. Backpropagating a unit gradient through
//! it reveals which input positions can receive updates:
//!
//! ```
//! use poolnet::pooling::PoolingStack;
//! use poolnet::tensor::{Shape, Tensor};
//!
//! let stack: PoolingStack = "AP3,MP2".parse().unwrap();
//! let x = Tensor::from_vec(
//!     Shape::new(1, 1, 6, 6),
//!     (0..36).map(|i| ((i * 7919) % 100) as f64 / 100.0).collect(),
//! )
//! .unwrap();
//! let mask = stack.route_mask(&x).unwrap();
//! // Averaging over 3x3 first makes every route land in one contiguous
//! // 3x3 patch: 9 reachable positions, strictly inside the 6x6 window.
//! assert_eq!(mask.count(), 9);
//! ```
//!
//! # Estimating the sequence-vs-top pooling probability
//!
//! ```
//! use poolnet::experiments::{sp_tp_probability, SpTpConfig};
//!
//! let cfg = SpTpConfig {
//!     extent: 16,
//!     in_channels: 1,
//!     depths: vec![1; 4],
//!     n: 2,
//!     samples: 10,
//!     seed: 1,
//!     identity_filters: true,
//! };
//! // Identity filters commute with max pooling, so the two branches agree
//! // exactly and the event probability is zero.
//! assert_eq!(sp_tp_probability(&cfg).unwrap().p, 0.0);
//! ```
//!
//! # Building a published architecture
//!
//! ```
//! use poolnet::arch::{build_spec, ArchName};
//! use poolnet::network::Network;
//!
//! let spec = build_spec(ArchName::AVgg8);
//! assert_eq!(spec.flatten_width().unwrap(), 8192);
//! let net = Network::build(&spec, 42).unwrap();
//! assert!(net.param_count() > 1_000_000);
//! ```

pub mod arch;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod optim;
pub mod pooling;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
