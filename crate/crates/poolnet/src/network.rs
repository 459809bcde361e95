//! Declarative architecture specs compiled into executable layer sequences.
//!
//! An [`ArchSpec`] lists conv blocks, pooling placements, and FC layers; it
//! shape-traces from a (3, 32, 32) input and compiles into a [`Network`]
//! whose parameters are split into the two training groups, convolutional
//! (CL) and fully connected (FC).

use crate::error::{Error, Result};
use crate::layers::{
    softmax_cross_entropy, BatchNormLayer, BnCache, ConvLayer, FcLayer, GradientBundle, InitKind,
};
use crate::layers::init::init_weights;
use crate::pooling::{PoolMemo, PoolingOp};
use crate::tensor::{Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const INPUT_CHANNELS: usize = 3;
pub const INPUT_EXTENT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// One item of an architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchItem {
    /// `count` consecutive conv layers of the given depth, each followed by
    /// batch norm (when set) and ReLU.
    ConvBlock {
        count: usize,
        depth: usize,
        kernel: usize,
        padding: usize,
        batchnorm: bool,
    },
    Pool(PoolingOp),
    Flatten,
    /// Hidden FC layer; its activation is the next `Activation` item.
    Fc { out: usize },
    Activation(Activation),
    /// Final FC layer to `classes` outputs; softmax is applied by the loss.
    SoftmaxOutput { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub items: Vec<ArchItem>,
}

/// Shape after one item: (channels, rows, cols).
pub type TraceShape = (usize, usize, usize);

impl ArchSpec {
    pub fn new(items: Vec<ArchItem>) -> Self {
        ArchSpec { items }
    }

    /// Exact (c, h, w) after every item, starting from (3, 32, 32).
    pub fn shape_trace(&self) -> Result<Vec<TraceShape>> {
        self.shape_trace_from((INPUT_CHANNELS, INPUT_EXTENT, INPUT_EXTENT))
    }

    pub fn shape_trace_from(&self, input: TraceShape) -> Result<Vec<TraceShape>> {
        let mut cur = input;
        let mut trace = Vec::with_capacity(self.items.len());
        let mut seen_softmax = false;
        let mut seen_flatten = false;
        let mut seen_fc = false;
        for (idx, item) in self.items.iter().enumerate() {
            if seen_softmax {
                return Err(Error::Build {
                    item: idx,
                    msg: "items after the softmax output".into(),
                });
            }
            match item {
                ArchItem::ConvBlock {
                    count,
                    depth,
                    kernel,
                    padding,
                    ..
                } => {
                    if *count == 0 || *depth == 0 || *kernel == 0 {
                        return Err(Error::Build {
                            item: idx,
                            msg: "conv block with zero count, depth, or kernel".into(),
                        });
                    }
                    for _ in 0..*count {
                        let span = *kernel as isize - 2 * *padding as isize;
                        if (cur.1 as isize) < span || (cur.2 as isize) < span {
                            return Err(Error::Build {
                                item: idx,
                                msg: format!(
                                    "input {}x{} too small for kernel {kernel} pad {padding}",
                                    cur.1, cur.2
                                ),
                            });
                        }
                        cur = (
                            *depth,
                            cur.1 + 2 * padding - kernel + 1,
                            cur.2 + 2 * padding - kernel + 1,
                        );
                    }
                }
                ArchItem::Pool(op) => {
                    if op.window < 2 || cur.1 % op.window != 0 || cur.2 % op.window != 0 {
                        return Err(Error::Build {
                            item: idx,
                            msg: format!(
                                "extent {}x{} not divisible by pooling window {}",
                                cur.1, cur.2, op.window
                            ),
                        });
                    }
                    cur = (cur.0, cur.1 / op.window, cur.2 / op.window);
                }
                ArchItem::Flatten => {
                    if seen_flatten {
                        return Err(Error::Build {
                            item: idx,
                            msg: "duplicate flatten".into(),
                        });
                    }
                    seen_flatten = true;
                    cur = (cur.0 * cur.1 * cur.2, 1, 1);
                }
                ArchItem::Fc { out } => {
                    if !seen_flatten {
                        return Err(Error::Build {
                            item: idx,
                            msg: "fc before flatten".into(),
                        });
                    }
                    seen_fc = true;
                    cur = (*out, 1, 1);
                }
                ArchItem::Activation(_) => {
                    if !seen_fc {
                        return Err(Error::Build {
                            item: idx,
                            msg: "activation item outside the fc stack".into(),
                        });
                    }
                }
                ArchItem::SoftmaxOutput { classes } => {
                    if !seen_flatten {
                        return Err(Error::Build {
                            item: idx,
                            msg: "softmax output before flatten".into(),
                        });
                    }
                    seen_softmax = true;
                    cur = (*classes, 1, 1);
                }
            }
            trace.push(cur);
        }
        if !seen_softmax {
            return Err(Error::Build {
                item: self.items.len(),
                msg: "missing softmax output".into(),
            });
        }
        Ok(trace)
    }

    /// Flattened width entering the first FC layer (0 if trace fails).
    pub fn flatten_width(&self) -> Result<usize> {
        let trace = self.shape_trace()?;
        for (item, shape) in self.items.iter().zip(&trace) {
            if matches!(item, ArchItem::Flatten) {
                return Ok(shape.0);
            }
        }
        unreachable!("shape_trace enforces a flatten item");
    }
}

/// Parameter group per the paper's two hyperparameter rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Cl,
    Fc,
}

/// Kind of an individual parameter tensor, used for L2 exclusion switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
}

/// One compiled layer.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvLayer),
    BatchNorm(BatchNormLayer),
    Relu,
    Pool(PoolingOp),
    Flatten,
    Fc(FcLayer),
}

/// Per-layer forward memo used by the backward pass.
pub enum Cache {
    Input(Tensor),
    Bn(Tensor, BnCache),
    Pool(PoolMemo),
    None,
}

pub type Tape = Vec<Cache>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Executable network: layers, their parameter groups, and the cached
/// shape trace of the spec it was built from.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub groups: Vec<ParamGroup>,
    pub spec: ArchSpec,
    pub trace: Vec<TraceShape>,
}

impl Network {
    /// Compile a spec with seed-deterministic parameters.
    pub fn build(spec: &ArchSpec, seed: u64) -> Result<Network> {
        Self::build_with_init(spec, seed, InitKind::HeNormal)
    }

    pub fn build_with_init(spec: &ArchSpec, seed: u64, init: InitKind) -> Result<Network> {
        let trace = spec.shape_trace()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut groups = Vec::new();
        let mut cur = (INPUT_CHANNELS, INPUT_EXTENT, INPUT_EXTENT);
        for item in &spec.items {
            match item {
                ArchItem::ConvBlock {
                    count,
                    depth,
                    kernel,
                    padding,
                    batchnorm,
                } => {
                    for _ in 0..*count {
                        let fan_in = cur.0 * kernel * kernel;
                        let filters = Tensor::from_vec(
                            Shape::new(*depth, cur.0, *kernel, *kernel),
                            init_weights(init, fan_in, depth * fan_in, &mut rng),
                        )?;
                        layers.push(Layer::Conv(ConvLayer::new(
                            filters,
                            vec![0.0; *depth],
                            *padding,
                        )?));
                        groups.push(ParamGroup::Cl);
                        if *batchnorm {
                            layers.push(Layer::BatchNorm(BatchNormLayer::new(*depth)));
                            groups.push(ParamGroup::Cl);
                        }
                        layers.push(Layer::Relu);
                        groups.push(ParamGroup::Cl);
                        cur = (
                            *depth,
                            cur.1 + 2 * padding - kernel + 1,
                            cur.2 + 2 * padding - kernel + 1,
                        );
                    }
                }
                ArchItem::Pool(op) => {
                    layers.push(Layer::Pool(*op));
                    groups.push(ParamGroup::Cl);
                    cur = (cur.0, cur.1 / op.window, cur.2 / op.window);
                }
                ArchItem::Flatten => {
                    layers.push(Layer::Flatten);
                    groups.push(ParamGroup::Fc);
                    cur = (cur.0 * cur.1 * cur.2, 1, 1);
                }
                ArchItem::Fc { out } => {
                    let fan_in = cur.0;
                    layers.push(Layer::Fc(FcLayer::new(
                        init_weights(init, fan_in, out * fan_in, &mut rng),
                        vec![0.0; *out],
                        fan_in,
                        *out,
                    )?));
                    groups.push(ParamGroup::Fc);
                    cur = (*out, 1, 1);
                }
                ArchItem::Activation(Activation::Relu) => {
                    layers.push(Layer::Relu);
                    groups.push(ParamGroup::Fc);
                }
                ArchItem::Activation(Activation::Linear) => {
                    // affine stacking, nothing to insert
                }
                ArchItem::SoftmaxOutput { classes } => {
                    let fan_in = cur.0;
                    layers.push(Layer::Fc(FcLayer::new(
                        init_weights(init, fan_in, classes * fan_in, &mut rng),
                        vec![0.0; *classes],
                        fan_in,
                        *classes,
                    )?));
                    groups.push(ParamGroup::Fc);
                    cur = (*classes, 1, 1);
                }
            }
        }
        Ok(Network {
            layers,
            groups,
            spec: spec.clone(),
            trace,
        })
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        if s.c != INPUT_CHANNELS || s.h != INPUT_EXTENT || s.w != INPUT_EXTENT {
            return Err(Error::ShapeMismatch {
                expected: format!("(n, {INPUT_CHANNELS}, {INPUT_EXTENT}, {INPUT_EXTENT})"),
                got: s.to_string(),
            });
        }
        Ok(())
    }

    /// Train-mode forward pass; the returned tape feeds `backward`.
    pub fn forward_train(&mut self, batch: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        let mut tape = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (y, cache) = match layer {
                Layer::Conv(conv) => (conv.forward(&x)?, Cache::Input(x)),
                Layer::BatchNorm(bn) => {
                    let (y, stats) = bn.forward_train(&x)?;
                    (y, Cache::Bn(x, stats))
                }
                Layer::Relu => (x.relu(), Cache::Input(x)),
                Layer::Pool(op) => {
                    let (y, memo) = op.forward(&x)?;
                    (y, Cache::Pool(memo))
                }
                Layer::Flatten => {
                    let s = x.shape();
                    let y = x.reshape(Shape::new(s.n, s.c * s.h * s.w, 1, 1))?;
                    (y, Cache::Input(x))
                }
                Layer::Fc(fc) => (fc.forward(&x)?, Cache::Input(x)),
            };
            tape.push(cache);
            x = y;
        }
        Ok((x, tape))
    }

    /// Eval-mode forward pass (running statistics, no tape).
    pub fn forward_eval(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(conv) => conv.forward(&x)?,
                Layer::BatchNorm(bn) => bn.forward_eval(&x)?,
                Layer::Relu => x.relu(),
                Layer::Pool(op) => op.forward(&x)?.0,
                Layer::Flatten => {
                    let s = x.shape();
                    x.reshape(Shape::new(s.n, s.c * s.h * s.w, 1, 1))?
                }
                Layer::Fc(fc) => fc.forward(&x)?,
            };
        }
        Ok(x)
    }

    pub fn forward(&mut self, batch: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Train => Ok(self.forward_train(batch)?.0),
            Mode::Eval => self.forward_eval(batch),
        }
    }

    /// Backward pass over a train-mode tape. Gradients exclude any L2 term;
    /// regularization is the optimizer's job.
    pub fn backward(&self, tape: &Tape, grad_logits: &Tensor) -> Result<NetGradients> {
        if tape.len() != self.layers.len() {
            return Err(Error::Config("tape does not match network".into()));
        }
        let mut grad = grad_logits.clone();
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        for (i, (layer, cache)) in self.layers.iter().zip(tape.iter()).enumerate().rev() {
            grad = match (layer, cache) {
                (Layer::Conv(conv), Cache::Input(x)) => {
                    let GradientBundle { params, input } = conv.backward(x, &grad)?;
                    per_layer[i] = params;
                    input
                }
                (Layer::BatchNorm(bn), Cache::Bn(x, stats)) => {
                    let GradientBundle { params, input } = bn.backward(x, stats, &grad)?;
                    per_layer[i] = params;
                    input
                }
                (Layer::Relu, Cache::Input(x)) => {
                    let mut g = grad;
                    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    g
                }
                (Layer::Pool(op), Cache::Pool(memo)) => op.backward(memo, &grad)?,
                (Layer::Flatten, Cache::Input(x)) => grad.reshape(x.shape())?,
                (Layer::Fc(fc), Cache::Input(x)) => {
                    let GradientBundle { params, input } = fc.backward(x, &grad)?;
                    per_layer[i] = params;
                    input
                }
                _ => return Err(Error::Config("tape/layer mismatch".into())),
            };
        }
        Ok(NetGradients {
            layers: per_layer,
            input: grad,
        })
    }

    /// Convenience: forward in train mode, loss, and backward in one call.
    pub fn loss_and_gradients(&mut self, batch: &Tensor, labels: &[u8]) -> Result<(f64, NetGradients)> {
        let (logits, tape) = self.forward_train(batch)?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward(&tape, &grad_logits)?;
        Ok((loss, grads))
    }

    /// Mutable views of every parameter tensor with its group and kind.
    pub fn params_mut(&mut self) -> Vec<(&mut Vec<f64>, ParamGroup, ParamKind)> {
        let mut out = Vec::new();
        for (layer, group) in self.layers.iter_mut().zip(&self.groups) {
            match layer {
                Layer::Conv(conv) => {
                    // split borrow: filters data then bias
                    let ConvLayer { filters, bias, .. } = conv;
                    out.push((filters.data_vec_mut(), *group, ParamKind::Weight));
                    out.push((bias, *group, ParamKind::Bias));
                }
                Layer::BatchNorm(bn) => {
                    out.push((&mut bn.gamma, *group, ParamKind::BnGamma));
                    out.push((&mut bn.beta, *group, ParamKind::BnBeta));
                }
                Layer::Fc(fc) => {
                    out.push((&mut fc.weights, *group, ParamKind::Weight));
                    out.push((&mut fc.bias, *group, ParamKind::Bias));
                }
                _ => {}
            }
        }
        out
    }

    /// Parameter gradients flattened in the same order as `params_mut`.
    pub fn flatten_grads(grads: &NetGradients) -> Vec<&Vec<f64>> {
        grads
            .layers
            .iter()
            .flat_map(|params| params.iter())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        let mut total = 0;
        for layer in &self.layers {
            match layer {
                Layer::Conv(conv) => total += conv.filters.len() + conv.bias.len(),
                Layer::BatchNorm(bn) => total += bn.gamma.len() + bn.beta.len(),
                Layer::Fc(fc) => total += fc.weights.len() + fc.bias.len(),
                _ => {}
            }
        }
        total
    }
}

/// Gradients for every layer's parameters plus the network input.
#[derive(Debug, Clone)]
pub struct NetGradients {
    /// Outer index matches `Network::layers`; inner Vec is the layer's
    /// canonical parameter order. Empty for parameterless layers.
    pub layers: Vec<Vec<Vec<f64>>>,
    pub input: Tensor,
}
