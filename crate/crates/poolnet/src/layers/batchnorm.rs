//! Per-channel batch normalization.

use crate::error::{Error, Result};
use crate::layers::GradientBundle;
use crate::tensor::Tensor;

/// Batch normalization over (batch, rows, cols) per channel, with affine
/// scale/shift and running statistics for eval mode.
///
/// Constants: epsilon 1e-5, running-average momentum 0.1, gamma starts at 1
/// and beta at 0. Running variance uses the unbiased estimator.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

/// Batch statistics captured by a train-mode forward pass, consumed by
/// `backward`.
#[derive(Debug, Clone)]
pub struct BnCache {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(channels: usize) -> Self {
        BatchNormLayer {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape().c != self.channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", self.channels()),
                got: x.shape().to_string(),
            });
        }
        Ok(())
    }

    /// Train-mode forward: normalize by batch statistics, apply the affine
    /// parameters, and update the running statistics.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        self.check(x)?;
        let s = x.shape();
        let m = s.n * s.h * s.w;
        if m < 2 {
            return Err(Error::InvalidShape(format!(
                "batch norm needs batch*h*w >= 2 in train mode, got {m}"
            )));
        }
        let c = self.channels();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        self.per_channel(x, |ch, v| mean[ch] += v);
        for v in &mut mean {
            *v /= m as f64;
        }
        self.per_channel(x, |ch, v| {
            let d = v - mean[ch];
            var[ch] += d * d;
        });
        for v in &mut var {
            *v /= m as f64;
        }

        let mut y = x.clone();
        self.normalize(&mut y, &mean, &var);

        for ch in 0..c {
            let unbiased = var[ch] * m as f64 / (m as f64 - 1.0);
            self.running_mean[ch] =
                (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
            self.running_var[ch] =
                (1.0 - self.momentum) * self.running_var[ch] + self.momentum * unbiased;
        }

        Ok((y, BnCache { mean, var }))
    }

    /// Eval-mode forward: normalize by the running statistics.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let mut y = x.clone();
        self.normalize(&mut y, &self.running_mean, &self.running_var);
        Ok(y)
    }

    fn normalize(&self, y: &mut Tensor, mean: &[f64], var: &[f64]) {
        let s = y.shape();
        let hw = s.h * s.w;
        for img in 0..s.n {
            for ch in 0..s.c {
                let inv = 1.0 / (var[ch] + self.epsilon).sqrt();
                let base = (img * s.c + ch) * hw;
                for v in &mut y.data_mut()[base..base + hw] {
                    *v = (*v - mean[ch]) * inv * self.gamma[ch] + self.beta[ch];
                }
            }
        }
    }

    fn per_channel(&self, x: &Tensor, mut f: impl FnMut(usize, f64)) {
        let s = x.shape();
        let hw = s.h * s.w;
        for img in 0..s.n {
            for ch in 0..s.c {
                let base = (img * s.c + ch) * hw;
                for &v in &x.data()[base..base + hw] {
                    f(ch, v);
                }
            }
        }
    }

    /// Backward through the train-mode normalization. Gradients are for
    /// gamma, beta, and the input, in that order.
    pub fn backward(&self, x: &Tensor, cache: &BnCache, grad_out: &Tensor) -> Result<GradientBundle> {
        self.check(x)?;
        if grad_out.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                expected: x.shape().to_string(),
                got: grad_out.shape().to_string(),
            });
        }
        let s = x.shape();
        let c = self.channels();
        let hw = s.h * s.w;
        let m = (s.n * hw) as f64;

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for img in 0..s.n {
            for ch in 0..s.c {
                let inv = 1.0 / (cache.var[ch] + self.epsilon).sqrt();
                let base = (img * s.c + ch) * hw;
                for i in 0..hw {
                    let xhat = (x.data()[base + i] - cache.mean[ch]) * inv;
                    let dy = grad_out.data()[base + i];
                    dgamma[ch] += dy * xhat;
                    dbeta[ch] += dy;
                    sum_dy[ch] += dy;
                    sum_dy_xhat[ch] += dy * xhat;
                }
            }
        }

        let mut dx = Tensor::zeros(s)?;
        for img in 0..s.n {
            for ch in 0..s.c {
                let inv = 1.0 / (cache.var[ch] + self.epsilon).sqrt();
                let base = (img * s.c + ch) * hw;
                for i in 0..hw {
                    let xhat = (x.data()[base + i] - cache.mean[ch]) * inv;
                    let dy = grad_out.data()[base + i];
                    dx.data_mut()[base + i] = self.gamma[ch] * inv
                        * (dy - sum_dy[ch] / m - xhat * sum_dy_xhat[ch] / m);
                }
            }
        }

        Ok(GradientBundle {
            params: vec![dgamma, dbeta],
            input: dx,
        })
    }
}
