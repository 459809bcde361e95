//! Softmax cross-entropy over ten classes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 10;

/// Mean cross-entropy over the batch together with the gradient with
/// respect to the logits: (softmax - one_hot) / batch.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    let classes = s.c * s.h * s.w;
    if classes != NUM_CLASSES {
        return Err(Error::ShapeMismatch {
            expected: format!("{NUM_CLASSES} logits per sample"),
            got: format!("{classes}"),
        });
    }
    if labels.len() != s.n {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", s.n),
            got: format!("{}", labels.len()),
        });
    }
    let n = s.n as f64;
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for (row, &label) in grad.data_mut().chunks_mut(NUM_CLASSES).zip(labels) {
        if label as usize >= NUM_CLASSES {
            return Err(Error::BadLabel(label));
        }
        // stable log-softmax
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss -= (row[label as usize] - log_sum) / n;
        for (i, v) in row.iter_mut().enumerate() {
            let p = (*v - log_sum).exp();
            *v = (p - if i == label as usize { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((loss, grad))
}

/// Softmax probabilities per sample (used for inspection and tests).
pub fn softmax_rows(logits: &Tensor) -> Vec<Vec<f64>> {
    logits
        .data()
        .chunks(NUM_CLASSES)
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn uniform_logits_give_ln_10() {
        let logits = Tensor::full(Shape::new(3, 10, 1, 1), 0.7).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 5, 9]).unwrap();
        assert!((loss - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_logit_drives_loss_to_zero() {
        let mut logits = Tensor::zeros(Shape::new(1, 10, 1, 1)).unwrap();
        logits.data_mut()[3] = 60.0;
        let (loss, _) = softmax_cross_entropy(&logits, &[3]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn bad_label_rejected() {
        let logits = Tensor::zeros(Shape::new(1, 10, 1, 1)).unwrap();
        assert!(softmax_cross_entropy(&logits, &[10]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Tensor::from_vec(
            Shape::new(2, 10, 1, 1),
            (0..20).map(|i| (i as f64 * 0.37).sin() * 5.0).collect(),
        )
        .unwrap();
        for row in softmax_rows(&logits) {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
