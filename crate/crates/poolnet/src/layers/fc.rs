//! Fully connected layer: affine map and its exact adjoint.

use crate::error::{Error, Result};
use crate::layers::GradientBundle;
use crate::tensor::{Shape, Tensor};

/// Dense layer with row-major weights (out_units x in_units) and one bias
/// per output unit. Inputs are flattened tensors shaped (n, in_units, 1, 1).
#[derive(Debug, Clone)]
pub struct FcLayer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_units: usize,
    pub out_units: usize,
}

impl FcLayer {
    pub fn new(weights: Vec<f64>, bias: Vec<f64>, in_units: usize, out_units: usize) -> Result<Self> {
        if weights.len() != in_units * out_units || bias.len() != out_units {
            return Err(Error::InvalidShape(format!(
                "fc weights {}x{} require {} weights and {} biases, got {} and {}",
                out_units,
                in_units,
                in_units * out_units,
                out_units,
                weights.len(),
                bias.len()
            )));
        }
        Ok(FcLayer {
            weights,
            bias,
            in_units,
            out_units,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.c * s.h * s.w != self.in_units {
            return Err(Error::ShapeMismatch {
                expected: format!("{} flattened units", self.in_units),
                got: format!("{s} (= {})", s.c * s.h * s.w),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let n = x.shape().n;
        let mut y = vec![0.0; n * self.out_units];
        // y = x * W^T, one row per sample
        unsafe {
            matrixmultiply::dgemm(
                n,
                self.in_units,
                self.out_units,
                1.0,
                x.data().as_ptr(),
                self.in_units as isize,
                1,
                self.weights.as_ptr(),
                1,
                self.in_units as isize,
                0.0,
                y.as_mut_ptr(),
                self.out_units as isize,
                1,
            );
        }
        for row in y.chunks_mut(self.out_units) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Tensor::from_vec(Shape::new(n, self.out_units, 1, 1), y)
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<GradientBundle> {
        self.check_input(x)?;
        let n = x.shape().n;
        let gs = grad_out.shape();
        if gs.n != n || gs.c * gs.h * gs.w != self.out_units {
            return Err(Error::ShapeMismatch {
                expected: format!("({n}, {}, 1, 1)", self.out_units),
                got: gs.to_string(),
            });
        }

        // dW = dY^T * X
        let mut dw = vec![0.0; self.out_units * self.in_units];
        unsafe {
            matrixmultiply::dgemm(
                self.out_units,
                n,
                self.in_units,
                1.0,
                grad_out.data().as_ptr(),
                1,
                self.out_units as isize,
                x.data().as_ptr(),
                self.in_units as isize,
                1,
                0.0,
                dw.as_mut_ptr(),
                self.in_units as isize,
                1,
            );
        }

        let mut db = vec![0.0; self.out_units];
        for row in grad_out.data().chunks(self.out_units) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }

        // dX = dY * W
        let mut dx = vec![0.0; n * self.in_units];
        unsafe {
            matrixmultiply::dgemm(
                n,
                self.out_units,
                self.in_units,
                1.0,
                grad_out.data().as_ptr(),
                self.out_units as isize,
                1,
                self.weights.as_ptr(),
                self.in_units as isize,
                1,
                0.0,
                dx.as_mut_ptr(),
                self.in_units as isize,
                1,
            );
        }

        Ok(GradientBundle {
            params: vec![dw, db],
            input: Tensor::from_vec(x.shape(), dx)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_through() {
        let n = 4;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        let layer = FcLayer::new(w, vec![0.0; n], n, n).unwrap();
        let x = Tensor::from_vec(Shape::new(2, n, 1, 1), (0..8).map(|i| i as f64).collect()).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_output_bias() {
        let layer = FcLayer::new(vec![0.0; 6], vec![1.5, -2.0], 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(
            Shape::new(5, 3, 1, 1),
            (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let y = layer.forward(&x).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, &[1.5, -2.0]);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let layer = FcLayer::new(vec![0.0; 6], vec![0.0; 2], 3, 2).unwrap();
        let x = Tensor::zeros(Shape::new(1, 4, 1, 1)).unwrap();
        assert!(layer.forward(&x).is_err());
    }
}
