//! Dense 4-D tensors in batch-channel-row-col row-major layout.
//!
//! One layout, one element type (`f64`). Every other module builds on the
//! shape arithmetic, windowed iteration, and reductions defined here.
//!
//! ```
//! use poolnet::tensor::{Shape, Tensor};
//!
//! let x = Tensor::full(Shape::new(1, 1, 2, 2), 3.0).unwrap();
//! assert_eq!(x.data().iter().sum::<f64>(), 12.0);
//! ```

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Extents of a 4-D tensor: (batch, channels, rows, cols).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// Total element count. Errors on zero extents or overflow.
    pub fn count(&self) -> Result<usize> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(Error::InvalidShape(format!("zero extent in {self}")));
        }
        self.n
            .checked_mul(self.c)
            .and_then(|v| v.checked_mul(self.h))
            .and_then(|v| v.checked_mul(self.w))
            .ok_or_else(|| Error::InvalidShape(format!("element count overflow in {self}")))
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense 4-D array of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Tensor with every element equal to `value`.
    pub fn full(shape: Shape, value: f64) -> Result<Self> {
        let count = shape.count()?;
        Ok(Tensor {
            shape,
            data: vec![value; count],
        })
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    /// Wrap an existing buffer. The length must match the shape.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let count = shape.count()?;
        if data.len() != count {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match shape {} (= {} elements)",
                data.len(),
                shape,
                count
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Mutable access to the backing buffer (parameter updates). The length
    /// must not change.
    pub fn data_vec_mut(&mut self) -> &mut Vec<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat index of `(n, c, h, w)`.
    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let i = self.idx(n, c, h, w);
        self.data[i] = v;
    }

    /// Reinterpret with a new shape of identical element count.
    pub fn reshape(&self, shape: Shape) -> Result<Tensor> {
        let count = shape.count()?;
        if count != self.data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} elements", self.data.len()),
                got: format!("{shape} (= {count} elements)"),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Elementwise max(x, 0).
    pub fn relu(&self) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| v.max(0.0)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Non-overlapping k-by-k block iteration over the spatial plane.
    ///
    /// Blocks are yielded per (batch, channel) in row-major block order and
    /// partition the plane: every element appears in exactly one block.
    pub fn window_iter(&self, k: usize) -> Result<WindowIter<'_>> {
        if k == 0 {
            return Err(Error::NotDivisible {
                extent: self.shape.h,
                window: 0,
            });
        }
        if self.shape.h % k != 0 {
            return Err(Error::NotDivisible {
                extent: self.shape.h,
                window: k,
            });
        }
        if self.shape.w % k != 0 {
            return Err(Error::NotDivisible {
                extent: self.shape.w,
                window: k,
            });
        }
        Ok(WindowIter {
            tensor: self,
            k,
            bh: self.shape.h / k,
            bw: self.shape.w / k,
            pos: 0,
        })
    }
}

/// One k-by-k spatial block of a tensor.
#[derive(Debug, Clone)]
pub struct WindowBlock {
    pub batch: usize,
    pub channel: usize,
    /// Block row index (in units of blocks, not elements).
    pub row: usize,
    /// Block column index.
    pub col: usize,
    /// Row-major block values, length k*k.
    pub values: Vec<f64>,
}

pub struct WindowIter<'a> {
    tensor: &'a Tensor,
    k: usize,
    bh: usize,
    bw: usize,
    pos: usize,
}

impl<'a> Iterator for WindowIter<'a> {
    type Item = WindowBlock;

    fn next(&mut self) -> Option<WindowBlock> {
        let s = self.tensor.shape();
        let total = s.n * s.c * self.bh * self.bw;
        if self.pos >= total {
            return None;
        }
        let p = self.pos;
        self.pos += 1;
        let col = p % self.bw;
        let row = (p / self.bw) % self.bh;
        let channel = (p / (self.bw * self.bh)) % s.c;
        let batch = p / (self.bw * self.bh * s.c);
        let mut values = Vec::with_capacity(self.k * self.k);
        for dh in 0..self.k {
            for dw in 0..self.k {
                values.push(
                    self.tensor
                        .at(batch, channel, row * self.k + dh, col * self.k + dw),
                );
            }
        }
        Some(WindowBlock {
            batch,
            channel,
            row,
            col,
            values,
        })
    }
}

/// First (row-major) position attaining the maximum of a block.
///
/// Ties break to the lowest index, which keeps max-pooling deterministic.
pub fn argmax_window(values: &[f64]) -> (usize, f64) {
    debug_assert!(!values.is_empty());
    let mut best = 0;
    let mut best_v = values[0];
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    (best, best_v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_fills() {
        let t = Tensor::full(Shape::new(1, 1, 2, 2), 0.0).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        let s = Tensor::full(Shape::new(1, 1, 1, 1), 3.5).unwrap();
        assert_eq!(s.data(), &[3.5]);
        let ones = Tensor::full(Shape::new(2, 3, 4, 4), 1.0).unwrap();
        assert_eq!(ones.len(), 96);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(Tensor::full(Shape::new(1, 0, 2, 2), 1.0).is_err());
        assert!(Tensor::zeros(Shape::new(0, 1, 1, 1)).is_err());
    }

    #[test]
    fn relu_definition() {
        let t = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(t.relu().data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::full(Shape::new(1, 2, 2, 2), -3.0).unwrap();
        assert!(neg.relu().data().iter().all(|&v| v == 0.0));
        let pos = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(pos.relu(), pos);
    }

    #[test]
    fn window_counts() {
        let t = Tensor::zeros(Shape::new(1, 1, 4, 4)).unwrap();
        assert_eq!(t.window_iter(2).unwrap().count(), 4);
        let t = Tensor::zeros(Shape::new(1, 1, 6, 6)).unwrap();
        assert_eq!(t.window_iter(3).unwrap().count(), 4);
        assert!(t.window_iter(4).is_err());
    }

    #[test]
    fn argmax_ties_to_lowest_index() {
        let (i, v) = argmax_window(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((i, v), (3, 4.0));
        let (i, v) = argmax_window(&[5.0, 5.0, 5.0, 5.0]);
        assert_eq!((i, v), (0, 5.0));
        let (i, v) = argmax_window(&[-3.0, -1.0, -2.0, -9.0]);
        assert_eq!((i, v), (1, -1.0));
    }
}
