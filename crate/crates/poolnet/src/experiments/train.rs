//! Full training loop: per-epoch shuffle, augmentation, minibatch SGD with
//! per-group schedules, and per-epoch test evaluation.
//!
//! The loop is single-threaded and fully determined by the run seed: epoch
//! shuffles and per-image augmentation draws come from RNG streams derived
//! from (seed, epoch), so two runs with the same seed produce bit-identical
//! losses.

use crate::data::{augment, AugmentPolicy, Dataset, IMAGE_PIXELS};
use crate::error::{Error, Result};
use crate::network::{ArchSpec, Network};
use crate::optim::{NesterovForm, Sgd, TrainDefaults};
use crate::tensor::{Shape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Everything that determines a training run besides the data itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: TrainDefaults,
    pub seed: u64,
    /// `None` disables augmentation (test data never gets any).
    pub augment: Option<AugmentPolicy>,
    pub nesterov: NesterovForm,
    /// Apply L2 to biases and batch-norm parameters as well as weights.
    pub l2_on_all: bool,
    /// Cap on minibatches per epoch, for smoke runs on subsets.
    pub max_batches_per_epoch: Option<usize>,
}

impl TrainConfig {
    pub fn new(hyper: TrainDefaults, seed: u64) -> Self {
        TrainConfig {
            hyper,
            seed,
            augment: Some(AugmentPolicy::default()),
            nesterov: NesterovForm::default(),
            l2_on_all: true,
            max_batches_per_epoch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hyper.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// One epoch's statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr_cl: f64,
    pub lr_fc: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Result of a full run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    pub final_test_accuracy: f64,
    pub wall_seconds: f64,
}

fn gather_batch(data: &Dataset, indices: &[usize]) -> (Tensor, Vec<u8>) {
    let mut buf = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        buf.extend_from_slice(&data.images.data()[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]);
        labels.push(data.labels[i]);
    }
    (
        Tensor::from_vec(Shape::new(indices.len(), 3, 32, 32), buf).unwrap(),
        labels,
    )
}

fn augment_batch(
    batch: &Tensor,
    policy: &AugmentPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let s = batch.shape();
    let mut out = Vec::with_capacity(batch.len());
    for i in 0..s.n {
        let image = Tensor::from_vec(
            Shape::new(1, s.c, s.h, s.w),
            batch.data()[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS].to_vec(),
        )?;
        out.extend_from_slice(augment(&image, policy, rng)?.data());
    }
    Tensor::from_vec(s, out)
}

/// Fraction of correct argmax predictions, evaluated in eval mode.
pub fn evaluate(net: &Network, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (batch, labels) = gather_batch(data, chunk);
        let logits = net.forward_eval(&batch)?;
        for (row, &label) in logits.data().chunks(logits.shape().c).zip(&labels) {
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            if best == label as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Train `net` in place and report per-epoch statistics.
pub fn train(
    net: &mut Network,
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let started = Instant::now();
    let mut opt = Sgd::with_options(net, cfg.nesterov, cfg.l2_on_all);
    let mut epochs = Vec::with_capacity(cfg.hyper.epochs);

    for epoch in 0..cfg.hyper.epochs {
        // Epoch-local stream: shuffle order and augmentation draws.
        let mut rng = super::sptp::stream_rng(cfg.seed, epoch as u64 + 1);
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.hyper.batch_size).enumerate() {
            if let Some(cap) = cfg.max_batches_per_epoch {
                if b >= cap {
                    break;
                }
            }
            let (mut batch, labels) = gather_batch(train_data, chunk);
            if let Some(policy) = &cfg.augment {
                batch = augment_batch(&batch, policy, &mut rng)?;
            }
            let (loss, grads) = net.loss_and_gradients(&batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            opt.step(net, &grads, &cfg.hyper, epoch)?;
            loss_sum += loss;
            batches += 1;
        }

        let train_accuracy = evaluate(net, train_data, cfg.hyper.batch_size)?;
        let test_accuracy = evaluate(net, test_data, cfg.hyper.batch_size)?;
        epochs.push(EpochStats {
            epoch,
            lr_cl: cfg.hyper.cl().schedule.lr_at_epoch(epoch),
            lr_fc: cfg.hyper.for_group(crate::network::ParamGroup::Fc).schedule.lr_at_epoch(epoch),
            train_loss: loss_sum / batches.max(1) as f64,
            train_accuracy,
            test_accuracy,
        });
    }

    let final_test_accuracy = match epochs.last() {
        Some(e) => e.test_accuracy,
        None => evaluate(net, test_data, cfg.hyper.batch_size)?,
    };
    Ok(TrainReport {
        config: cfg.clone(),
        epochs,
        final_test_accuracy,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Build a network from a spec and train it; the usual entry point.
pub fn train_spec(
    spec: &ArchSpec,
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    let mut net = Network::build(spec, cfg.seed)?;
    let report = train(&mut net, train_data, test_data, cfg)?;
    Ok((net, report))
}
