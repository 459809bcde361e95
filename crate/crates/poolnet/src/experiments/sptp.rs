//! Sequence pooling (SP) versus top pooling (TP).
//!
//! Both branches share one chain of size-preserving (3x3, padding 1)
//! convolutions with ReLU. The SP branch interleaves a (2x2) max pool after
//! each of the first `n` layers; the TP branch runs every layer at full
//! extent and applies one (2^n x 2^n) max pool at the end. Both outputs have
//! identical shape, and the experiment estimates the probability that an SP
//! output strictly exceeds the TP output at the same position.
//!
//! The ratio event "O_SP / O_TP > 1" is implemented as the division-free
//! strict comparison `O_SP > O_TP`: ReLU makes zero outputs possible, and
//! positions where both are zero count as "not greater".

use crate::error::{Error, Result};
use crate::layers::{he_normal, ConvLayer};
use crate::pooling::PoolingOp;
use crate::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use super::tree::ProbabilityEstimate;

/// Configuration of one SP/TP probability estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpTpConfig {
    /// Square input extent; must be divisible by 2^n.
    pub extent: usize,
    /// Input channel count (1 for the scalar chain, 3 for image inputs).
    pub in_channels: usize,
    /// Output channel count of each conv layer; the length is the layer count.
    pub depths: Vec<usize>,
    /// Number of (2x2) max pools in the SP branch; TP uses one (2^n x 2^n).
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    /// Replace random filters with channel-matched delta kernels.
    pub identity_filters: bool,
}

impl SpTpConfig {
    /// The paper's scalar chain at a desk-friendly extent: ten depth-1
    /// layers on a 256x256 Gaussian input.
    pub fn desk_scale(n: usize, samples: usize, seed: u64) -> Self {
        SpTpConfig {
            extent: 256,
            in_channels: 1,
            depths: vec![1; 10],
            n,
            samples,
            seed,
            identity_filters: false,
        }
    }

    /// The original 1024x1024 setting.
    pub fn paper_scale(n: usize, samples: usize, seed: u64) -> Self {
        SpTpConfig {
            extent: 1024,
            ..Self::desk_scale(n, samples, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.samples == 0 || self.in_channels == 0 {
            return Err(Error::Config(
                "layer chain, channels, and sample count must be non-empty".into(),
            ));
        }
        if self.n > self.depths.len() {
            return Err(Error::Config(format!(
                "n = {} exceeds the {}-layer chain",
                self.n,
                self.depths.len()
            )));
        }
        let factor = 1usize << self.n;
        if self.extent % factor != 0 {
            return Err(Error::NotDivisible {
                extent: self.extent,
                window: factor,
            });
        }
        Ok(())
    }
}

/// Independent per-sample RNG stream derived from (seed, index).
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    // SplitMix64 finalizer: decorrelates consecutive indices.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn gaussian_image(rng: &mut ChaCha8Rng, channels: usize, extent: usize) -> Tensor {
    let shape = Shape::new(1, channels, extent, extent);
    let data = (0..channels * extent * extent)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// One fresh filter chain. Biases are zero; weights are He-normal draws
/// unless `identity` asks for channel-matched delta kernels.
pub(crate) fn draw_filters(
    rng: &mut ChaCha8Rng,
    in_channels: usize,
    depths: &[usize],
    identity: bool,
) -> Vec<ConvLayer> {
    let mut convs = Vec::with_capacity(depths.len());
    let mut c_in = in_channels;
    for &c_out in depths {
        let filters = if identity {
            crate::layers::delta_filters(c_out, c_in, 3)
        } else {
            let shape = Shape::new(c_out, c_in, 3, 3);
            let fan_in = c_in * 9;
            let data = he_normal(fan_in, c_out * c_in * 9, rng);
            Tensor::from_vec(shape, data).unwrap()
        };
        convs.push(ConvLayer::new(filters, vec![0.0; c_out], 1).unwrap());
        c_in = c_out;
    }
    convs
}

fn checksum(convs: &[ConvLayer]) -> f64 {
    convs
        .iter()
        .map(|c| c.filters.data().iter().sum::<f64>())
        .sum()
}

/// Per-channel standardization over the spatial plane (zero mean, unit
/// variance, eps 1e-5) — batch normalization with statistics taken from the
/// single input, as an untrained conv stage with a norm layer would apply.
fn instance_norm(x: &Tensor) -> Tensor {
    let s = x.shape();
    let plane = s.h * s.w;
    let mut out = x.clone();
    for b in 0..s.n {
        for c in 0..s.c {
            let start = out.idx(b, c, 0, 0);
            let slice = &mut out.data_mut()[start..start + plane];
            let mean = slice.iter().sum::<f64>() / plane as f64;
            let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64;
            let inv = 1.0 / (var + 1e-5).sqrt();
            for v in slice.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
    }
    out
}

/// Run both branches on one input with one shared filter chain and return
/// (SP output, TP output), each of extent `extent / 2^n`.
///
/// With `normalize` set, every conv output is per-channel standardized
/// before ReLU (the deep chains' batch-norm stage); without it the layers
/// are bare conv + ReLU (the scalar-chain setting).
pub fn branch_outputs(
    convs: &[ConvLayer],
    n: usize,
    input: &Tensor,
    normalize: bool,
) -> Result<(Tensor, Tensor)> {
    let before = checksum(convs);
    let pool2 = PoolingOp::max(2);

    let mut sp = input.clone();
    for (l, conv) in convs.iter().enumerate() {
        sp = conv.forward(&sp)?;
        if normalize {
            sp = instance_norm(&sp);
        }
        sp = sp.relu();
        if l < n {
            sp = pool2.forward(&sp)?.0;
        }
    }

    let mut tp = input.clone();
    for conv in convs {
        tp = conv.forward(&tp)?;
        if normalize {
            tp = instance_norm(&tp);
        }
        tp = tp.relu();
    }
    if n > 0 {
        tp = PoolingOp::max(1 << n).forward(&tp)?.0;
    }

    // Both branches must have consumed identical filters.
    debug_assert_eq!(before, checksum(convs));
    debug_assert_eq!(sp.shape(), tp.shape());
    Ok((sp, tp))
}

fn count_greater(sp: &Tensor, tp: &Tensor) -> (usize, usize) {
    let events = sp
        .data()
        .iter()
        .zip(tp.data())
        .filter(|(a, b)| a > b)
        .count();
    (events, sp.len())
}

/// Monte-Carlo estimate of P(O_SP > O_TP). Each sample draws a fresh
/// Gaussian input and a fresh untrained filter chain; the fraction is taken
/// over all output positions of all samples.
pub fn sp_tp_probability(cfg: &SpTpConfig) -> Result<ProbabilityEstimate> {
    cfg.validate()?;
    let mut events = 0;
    let mut positions = 0;
    for sample in 0..cfg.samples {
        let mut rng = stream_rng(cfg.seed, sample as u64);
        let input = gaussian_image(&mut rng, cfg.in_channels, cfg.extent);
        let convs = draw_filters(&mut rng, cfg.in_channels, &cfg.depths, cfg.identity_filters);
        let (sp, tp) = branch_outputs(&convs, cfg.n, &input, false)?;
        let (e, t) = count_greater(&sp, &tp);
        events += e;
        positions += t;
    }
    Ok(ProbabilityEstimate::from_counts(events, positions))
}

/// The estimate at each pooling count in `ns`, sharing everything else.
pub fn sp_tp_sweep(base: &SpTpConfig, ns: &[usize]) -> Result<Vec<(usize, ProbabilityEstimate)>> {
    let mut curve = Vec::with_capacity(ns.len());
    for &n in ns {
        let cfg = SpTpConfig {
            n,
            ..base.clone()
        };
        curve.push((n, sp_tp_probability(&cfg)?));
    }
    Ok(curve)
}

/// Channel depths of the five-stage image chain used by [`sp_tp_vgg8`].
pub const VGG8_DEPTHS: [usize; 5] = [64, 128, 256, 512, 512];

/// The deep-chain variant: five conv stages with channel depths
/// (64, 128, 256, 512, 512) on 32x32 RGB inputs. SP places a (2x2) max pool
/// after every stage; TP places one (32x32) max pool at the top; the 512
/// per-channel scalars of the two branches are compared.
///
/// `images` are (1, 3, 32, 32) tensors; each of `filter_sets` chains is run
/// over every image. `normalize` turns on the per-channel standardization
/// each conv stage of this architecture family performs (its norm layer);
/// without it the amplification max pooling applies to ReLU outputs
/// compounds through the five stages and swamps the comparison.
pub fn sp_tp_vgg8(
    images: &[Tensor],
    filter_sets: usize,
    seed: u64,
    identity_filters: bool,
    normalize: bool,
) -> Result<ProbabilityEstimate> {
    if images.is_empty() || filter_sets == 0 {
        return Err(Error::Config("need at least one image and one filter set".into()));
    }
    let expected = Shape::new(1, 3, 32, 32);
    let mut events = 0;
    let mut positions = 0;
    for set in 0..filter_sets {
        let mut rng = stream_rng(seed, set as u64);
        let convs = draw_filters(&mut rng, 3, &VGG8_DEPTHS, identity_filters);
        for image in images {
            if image.shape() != expected {
                return Err(Error::ShapeMismatch {
                    expected: expected.to_string(),
                    got: image.shape().to_string(),
                });
            }
            let (sp, tp) = branch_outputs(&convs, 5, image, normalize)?;
            debug_assert_eq!(sp.len(), 512);
            let (e, t) = count_greater(&sp, &tp);
            events += e;
            positions += t;
        }
    }
    Ok(ProbabilityEstimate::from_counts(events, positions))
}
