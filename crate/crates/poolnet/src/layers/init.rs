//! He initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

/// Weight initialization family. He-normal is the default; the uniform form
/// (same standard deviation) is available as a switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InitKind {
    #[default]
    HeNormal,
    HeUniform,
}

/// Zero-mean normal samples with standard deviation sqrt(2 / fan_in).
pub fn he_normal(fan_in: usize, count: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(fan_in >= 1);
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).unwrap();
    (0..count).map(|_| dist.sample(rng)).collect()
}

/// Zero-mean uniform samples with standard deviation sqrt(2 / fan_in),
/// i.e. bound sqrt(6 / fan_in).
pub fn he_uniform(fan_in: usize, count: usize, rng: &mut impl Rng) -> Vec<f64> {
    assert!(fan_in >= 1);
    let bound = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..count).map(|_| dist.sample(rng)).collect()
}

pub fn init_weights(kind: InitKind, fan_in: usize, count: usize, rng: &mut impl Rng) -> Vec<f64> {
    match kind {
        InitKind::HeNormal => he_normal(fan_in, count, rng),
        InitKind::HeUniform => he_uniform(fan_in, count, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn he_normal_std_targets_sqrt_2_over_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = he_normal(2, 1_000_000, &mut rng);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / samples.len() as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.01, "std = {}", var.sqrt());
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn fan_in_eight_targets_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = he_normal(8, 1_000_000, &mut rng);
        let var = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.005);
    }

    #[test]
    fn seeded_stream_replays() {
        let a = he_normal(4, 100, &mut ChaCha8Rng::seed_from_u64(7));
        let b = he_normal(4, 100, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn he_uniform_matches_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = he_uniform(2, 1_000_000, &mut rng);
        let var = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.01);
    }
}
