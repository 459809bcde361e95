//! Trainable layers with analytic forward and backward passes.

mod batchnorm;
mod conv;
mod fc;
pub(crate) mod init;
mod loss;

pub use batchnorm::{BatchNormLayer, BnCache};
pub use conv::{delta_filters, ConvLayer};
pub use fc::FcLayer;
pub use init::{he_normal, he_uniform, InitKind};
pub use loss::{softmax_cross_entropy, softmax_rows};

use crate::tensor::Tensor;

/// Gradients produced by one layer's backward pass.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    /// Gradients for the layer's parameter tensors, in the layer's canonical
    /// parameter order (weights first, then bias, then any extras).
    pub params: Vec<Vec<f64>>,
    /// Gradient with respect to the layer input.
    pub input: Tensor,
}
