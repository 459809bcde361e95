//! CIFAR-10 binary ingestion, preprocessing, augmentation, and synthetic
//! Gaussian inputs.
//!
//! The binary layout is the standard one: per record 1 label byte followed
//! by 3072 pixel bytes, channel-major R, G, B, each channel a row-major
//! 32x32 plane. Pixels map affinely onto [-1, 1].

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const IMAGE_PIXELS: usize = 3 * 32 * 32;
pub const RECORD_BYTES: usize = 1 + IMAGE_PIXELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Preprocessed images (N, 3, 32, 32) with class labels in [0, 9].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy one image out as a (1, 3, 32, 32) tensor.
    pub fn image(&self, index: usize) -> Tensor {
        let src = &self.images.data()[index * IMAGE_PIXELS..(index + 1) * IMAGE_PIXELS];
        Tensor::from_vec(Shape::new(1, 3, 32, 32), src.to_vec()).unwrap()
    }

    /// Seeded subset of the first `count` shuffled indices, for validation
    /// splits drawn from the training set.
    pub fn subset(&self, count: usize, seed: u64) -> Dataset {
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        indices.truncate(count.min(self.len()));
        self.select(&indices)
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]);
            labels.push(self.labels[i]);
        }
        Dataset {
            images: Tensor::from_vec(Shape::new(indices.len(), 3, 32, 32), data).unwrap(),
            labels,
            split: self.split,
        }
    }
}

/// Map a raw pixel byte onto [-1, 1]: v = byte/255 * 2 - 1.
#[inline]
pub fn preprocess(byte: u8) -> f64 {
    byte as f64 / 255.0 * 2.0 - 1.0
}

/// Recover the byte from a preprocessed value (exact for all 256 bytes).
#[inline]
pub fn unpreprocess(v: f64) -> u8 {
    ((v + 1.0) * 255.0 / 2.0).round() as u8
}

fn load_batch_file(path: &Path, data: &mut Vec<f64>, labels: &mut Vec<u8>) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| {
        Error::DataFormat(format!("cannot read {}: {e}", path.display()))
    })?;
    if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::DataFormat(format!(
            "{}: {} bytes is not a whole number of {RECORD_BYTES}-byte records",
            path.display(),
            bytes.len()
        )));
    }
    for record in bytes.chunks(RECORD_BYTES) {
        let label = record[0];
        if label > 9 {
            return Err(Error::DataFormat(format!(
                "{}: corrupt label byte {label}",
                path.display()
            )));
        }
        labels.push(label);
        data.extend(record[1..].iter().map(|&b| preprocess(b)));
    }
    Ok(())
}

/// Load the standard five training batches and the test batch from a
/// directory of `data_batch_1..5.bin` and `test_batch.bin`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train_data = Vec::new();
    let mut train_labels = Vec::new();
    for i in 1..=5 {
        load_batch_file(&dir.join(format!("data_batch_{i}.bin")), &mut train_data, &mut train_labels)?;
    }
    let mut test_data = Vec::new();
    let mut test_labels = Vec::new();
    load_batch_file(&dir.join("test_batch.bin"), &mut test_data, &mut test_labels)?;
    Ok((
        Dataset {
            images: Tensor::from_vec(
                Shape::new(train_labels.len(), 3, 32, 32),
                train_data,
            )?,
            labels: train_labels,
            split: Split::Train,
        },
        Dataset {
            images: Tensor::from_vec(Shape::new(test_labels.len(), 3, 32, 32), test_data)?,
            labels: test_labels,
            split: Split::Test,
        },
    ))
}

/// Environment variable naming the CIFAR-10 binary directory.
pub const DATA_DIR_ENV: &str = "POOLNET_DATA";

/// Dataset root: `$POOLNET_DATA` if set, else `./data/cifar10`.
pub fn default_data_dir() -> std::path::PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::PathBuf::from("data/cifar10"))
}

/// Load CIFAR-10 from the default directory if the files are present.
pub fn try_load_cifar10() -> Option<(Dataset, Dataset)> {
    let dir = default_data_dir();
    if dir.join("test_batch.bin").is_file() {
        load_cifar10(&dir).ok()
    } else {
        None
    }
}

/// Synthetic stand-in dataset: uniform pixel noise over the preprocessed
/// value range with labels independent of the pixels. Useful for smoke runs
/// and chance-level checks when no real dataset is on disk; nothing can be
/// learned from it.
pub fn synthetic_dataset(count: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(count * IMAGE_PIXELS);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        labels.push(rng.gen_range(0..10u8));
        for _ in 0..IMAGE_PIXELS {
            data.push(preprocess(rng.gen_range(0..=255u16) as u8));
        }
    }
    Dataset {
        images: Tensor::from_vec(Shape::new(count, 3, 32, 32), data).unwrap(),
        labels,
        split,
    }
}

/// Horizontal flip with p = 0.5 and translation up to four pixels per axis,
/// vacated pixels filled with 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub flip_probability: f64,
    pub max_translation: i32,
    pub fill: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            flip_probability: 0.5,
            max_translation: 4,
            fill: 0.0,
        }
    }
}

/// Augment a single (1, 3, 32, 32) image; the original is not mutated.
pub fn augment(image: &Tensor, policy: &AugmentPolicy, rng: &mut impl Rng) -> Result<Tensor> {
    let s = image.shape();
    if s.n != 1 {
        return Err(Error::ShapeMismatch {
            expected: "(1, c, h, w) image".into(),
            got: s.to_string(),
        });
    }
    let flip = rng.gen_bool(policy.flip_probability);
    let t = policy.max_translation;
    let dx = rng.gen_range(-t..=t);
    let dy = rng.gen_range(-t..=t);
    Ok(apply_augment(image, flip, dx, dy, policy.fill))
}

/// Deterministic core of `augment`: flip first, then translate by (dx, dy)
/// where dx shifts columns rightward and dy shifts rows downward.
pub fn apply_augment(image: &Tensor, flip: bool, dx: i32, dy: i32, fill: f64) -> Tensor {
    let s = image.shape();
    let mut out = Tensor::full(s, fill).unwrap();
    for c in 0..s.c {
        for r in 0..s.h as i32 {
            for col in 0..s.w as i32 {
                let src_r = r - dy;
                let src_c = col - dx;
                if src_r < 0 || src_r >= s.h as i32 || src_c < 0 || src_c >= s.w as i32 {
                    continue;
                }
                let src_col = if flip {
                    s.w as i32 - 1 - src_c
                } else {
                    src_c
                };
                out.set(
                    0,
                    c,
                    r as usize,
                    col as usize,
                    image.at(0, c, src_r as usize, src_col as usize),
                );
            }
        }
    }
    out
}

/// Reproducible stream of (1, channels, extent, extent) tensors with
/// standard-normal entries.
pub struct GaussianInputs {
    rng: ChaCha8Rng,
    shape: Shape,
    remaining: usize,
}

pub fn gaussian_inputs(extent: usize, channels: usize, count: usize, seed: u64) -> GaussianInputs {
    GaussianInputs {
        rng: ChaCha8Rng::seed_from_u64(seed),
        shape: Shape::new(1, channels, extent, extent),
        remaining: count,
    }
}

impl Iterator for GaussianInputs {
    type Item = Tensor;

    fn next(&mut self) -> Option<Tensor> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let n = self.shape.count().unwrap();
        let data = (0..n).map(|_| self.rng.sample(StandardNormal)).collect();
        Some(Tensor::from_vec(self.shape, data).unwrap())
    }
}

// Raw tensor dump format: magic "PNT1", dtype code u8 (0 = f64), four u32
// little-endian extents, then little-endian f64 values.
const TENSOR_MAGIC: &[u8; 4] = b"PNT1";

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(TENSOR_MAGIC)?;
    f.write_all(&[0u8])?;
    let s = tensor.shape();
    for extent in [s.n, s.c, s.h, s.w] {
        f.write_all(&(extent as u32).to_le_bytes())?;
    }
    for v in tensor.data() {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let mut f = fs::File::open(path)?;
    let mut header = [0u8; 21];
    f.read_exact(&mut header)
        .map_err(|_| Error::DataFormat(format!("{}: truncated header", path.display())))?;
    if &header[..4] != TENSOR_MAGIC {
        return Err(Error::DataFormat(format!("{}: bad magic", path.display())));
    }
    if header[4] != 0 {
        return Err(Error::DataFormat(format!(
            "{}: unsupported dtype code {}",
            path.display(),
            header[4]
        )));
    }
    let mut extents = [0usize; 4];
    for (i, e) in extents.iter_mut().enumerate() {
        *e = u32::from_le_bytes(header[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    }
    let shape = Shape::new(extents[0], extents[1], extents[2], extents[3]);
    let count = shape.count()?;
    let mut body = vec![0u8; count * 8];
    f.read_exact(&mut body)
        .map_err(|_| Error::DataFormat(format!("{}: truncated body", path.display())))?;
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preprocess_endpoints() {
        assert_eq!(preprocess(0), -1.0);
        assert_eq!(preprocess(255), 1.0);
        assert!((preprocess(51) - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn preprocess_round_trips_all_bytes() {
        for b in 0..=255u8 {
            assert_eq!(unpreprocess(preprocess(b)), b);
        }
        // strictly increasing
        for b in 0..255u8 {
            assert!(preprocess(b) < preprocess(b + 1));
        }
    }

    #[test]
    fn identity_augment_is_identity() {
        let image = Tensor::from_vec(
            Shape::new(1, 3, 32, 32),
            (0..IMAGE_PIXELS).map(|i| (i % 7) as f64 / 7.0).collect(),
        )
        .unwrap();
        assert_eq!(apply_augment(&image, false, 0, 0, 0.0), image);
    }

    #[test]
    fn double_flip_is_identity() {
        let image = Tensor::from_vec(
            Shape::new(1, 3, 32, 32),
            (0..IMAGE_PIXELS).map(|i| (i % 11) as f64).collect(),
        )
        .unwrap();
        let once = apply_augment(&image, true, 0, 0, 0.0);
        let twice = apply_augment(&once, true, 0, 0, 0.0);
        assert_eq!(twice, image);
    }

    #[test]
    fn translate_right_fills_leading_columns() {
        let image = Tensor::full(Shape::new(1, 3, 32, 32), 0.5).unwrap();
        let shifted = apply_augment(&image, false, 4, 0, 0.0);
        for c in 0..3 {
            for r in 0..32 {
                for col in 0..4 {
                    assert_eq!(shifted.at(0, c, r, col), 0.0);
                }
                for col in 4..32 {
                    assert_eq!(shifted.at(0, c, r, col), 0.5);
                }
            }
        }
    }

    #[test]
    fn gaussian_moments_and_determinism() {
        let all: Vec<f64> = gaussian_inputs(100, 1, 100, 7)
            .flat_map(|t| t.into_data())
            .collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "std {}", var.sqrt());

        let a: Vec<Tensor> = gaussian_inputs(8, 2, 3, 9).collect();
        let b: Vec<Tensor> = gaussian_inputs(8, 2, 3, 9).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn loader_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        // truncated record
        fs::write(dir.path().join("data_batch_1.bin"), vec![0u8; 3072]).unwrap();
        assert!(load_cifar10(dir.path()).is_err());

        // corrupt label
        let mut rec = vec![11u8];
        rec.extend(vec![0u8; IMAGE_PIXELS]);
        fs::write(dir.path().join("data_batch_1.bin"), rec).unwrap();
        assert!(load_cifar10(dir.path()).is_err());

        // missing files
        let empty = tempfile::tempdir().unwrap();
        assert!(load_cifar10(empty.path()).is_err());
    }

    #[test]
    fn loader_reads_well_formed_records() {
        let dir = tempfile::tempdir().unwrap();
        for i in 1..=5 {
            let mut bytes = Vec::new();
            for r in 0..4u8 {
                bytes.push((r + i as u8) % 10);
                bytes.extend(std::iter::repeat(128u8).take(IMAGE_PIXELS));
            }
            fs::write(dir.path().join(format!("data_batch_{i}.bin")), bytes).unwrap();
        }
        let mut bytes = Vec::new();
        bytes.push(3u8);
        bytes.extend(std::iter::repeat(255u8).take(IMAGE_PIXELS));
        fs::write(dir.path().join("test_batch.bin"), bytes).unwrap();

        let (train, test) = load_cifar10(dir.path()).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(test.len(), 1);
        assert_eq!(test.labels[0], 3);
        assert!(test.images.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tensor_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pnt");
        let t = Tensor::from_vec(
            Shape::new(2, 1, 2, 3),
            (0..12).map(|i| i as f64 * 0.5 - 3.0).collect(),
        )
        .unwrap();
        save_tensor(&path, &t).unwrap();
        assert_eq!(load_tensor(&path).unwrap(), t);
    }
}
