//! 2-D convolution (cross-correlation) with stride 1, implemented as
//! per-image im2col plus GEMM.

use crate::error::{Error, Result};
use crate::layers::GradientBundle;
use crate::tensor::{Shape, Tensor};

/// Convolution layer: `filters` shaped (out_depth, in_depth, K, K), one bias
/// per output channel, zero padding, stride fixed to 1.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub filters: Tensor,
    pub bias: Vec<f64>,
    pub padding: usize,
}

impl ConvLayer {
    pub fn new(filters: Tensor, bias: Vec<f64>, padding: usize) -> Result<Self> {
        let fs = filters.shape();
        if fs.h != fs.w {
            return Err(Error::InvalidShape(format!("non-square filters {fs}")));
        }
        if bias.len() != fs.n {
            return Err(Error::InvalidShape(format!(
                "bias length {} != out depth {}",
                bias.len(),
                fs.n
            )));
        }
        Ok(ConvLayer {
            filters,
            bias,
            padding,
        })
    }

    pub fn out_depth(&self) -> usize {
        self.filters.shape().n
    }

    pub fn in_depth(&self) -> usize {
        self.filters.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.filters.shape().h
    }

    /// Output shape for a given input shape.
    pub fn out_shape(&self, input: Shape) -> Result<Shape> {
        let k = self.kernel();
        if input.c != self.in_depth() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input channels", self.in_depth()),
                got: format!("{}", input.c),
            });
        }
        let span = k as isize - 2 * self.padding as isize;
        if (input.h as isize) < span || (input.w as isize) < span {
            return Err(Error::InvalidShape(format!(
                "input {input} too small for kernel {k} with padding {}",
                self.padding
            )));
        }
        Ok(Shape::new(
            input.n,
            self.out_depth(),
            input.h + 2 * self.padding - k + 1,
            input.w + 2 * self.padding - k + 1,
        ))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let (oh, ow) = (out_shape.h, out_shape.w);
        let d = self.out_depth();
        let ckk = self.in_depth() * self.kernel() * self.kernel();
        let mut y = Tensor::zeros(out_shape)?;
        let mut col = vec![0.0; ckk * oh * ow];
        for img in 0..x.shape().n {
            self.im2col(x, img, &mut col);
            let out = &mut y.data_mut()[img * d * oh * ow..(img + 1) * d * oh * ow];
            unsafe {
                matrixmultiply::dgemm(
                    d,
                    ckk,
                    oh * ow,
                    1.0,
                    self.filters.data().as_ptr(),
                    ckk as isize,
                    1,
                    col.as_ptr(),
                    (oh * ow) as isize,
                    1,
                    0.0,
                    out.as_mut_ptr(),
                    (oh * ow) as isize,
                    1,
                );
            }
            for ch in 0..d {
                let b = self.bias[ch];
                for v in &mut out[ch * oh * ow..(ch + 1) * oh * ow] {
                    *v += b;
                }
            }
        }
        Ok(y)
    }

    /// Analytic gradients for filters, bias, and input.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<GradientBundle> {
        let out_shape = self.out_shape(x.shape())?;
        if grad_out.shape() != out_shape {
            return Err(Error::ShapeMismatch {
                expected: out_shape.to_string(),
                got: grad_out.shape().to_string(),
            });
        }
        let (oh, ow) = (out_shape.h, out_shape.w);
        let d = self.out_depth();
        let k = self.kernel();
        let ckk = self.in_depth() * k * k;

        let mut dfilters = vec![0.0; d * ckk];
        let mut dbias = vec![0.0; d];
        let mut dx = Tensor::zeros(x.shape())?;
        let mut col = vec![0.0; ckk * oh * ow];
        let mut dcol = vec![0.0; ckk * oh * ow];

        for img in 0..x.shape().n {
            let go = &grad_out.data()[img * d * oh * ow..(img + 1) * d * oh * ow];

            // dF += dOut * col^T   (accumulated across images via beta = 1)
            self.im2col(x, img, &mut col);
            unsafe {
                matrixmultiply::dgemm(
                    d,
                    oh * ow,
                    ckk,
                    1.0,
                    go.as_ptr(),
                    (oh * ow) as isize,
                    1,
                    col.as_ptr(),
                    1,
                    (oh * ow) as isize,
                    1.0,
                    dfilters.as_mut_ptr(),
                    ckk as isize,
                    1,
                );
            }

            for ch in 0..d {
                dbias[ch] += go[ch * oh * ow..(ch + 1) * oh * ow].iter().sum::<f64>();
            }

            // dcol = F^T * dOut, then scattered back through the patches.
            unsafe {
                matrixmultiply::dgemm(
                    ckk,
                    d,
                    oh * ow,
                    1.0,
                    self.filters.data().as_ptr(),
                    1,
                    ckk as isize,
                    go.as_ptr(),
                    (oh * ow) as isize,
                    1,
                    0.0,
                    dcol.as_mut_ptr(),
                    (oh * ow) as isize,
                    1,
                );
            }
            self.col2im(&dcol, img, &mut dx);
        }

        Ok(GradientBundle {
            params: vec![dfilters, dbias],
            input: dx,
        })
    }

    /// Unfold one image's patches into `col` (rows = C*K*K, cols = oh*ow).
    fn im2col(&self, x: &Tensor, img: usize, col: &mut [f64]) {
        let s = x.shape();
        let k = self.kernel();
        let p = self.padding as isize;
        let oh = s.h + 2 * self.padding - k + 1;
        let ow = s.w + 2 * self.padding - k + 1;
        for c in 0..s.c {
            for kh in 0..k {
                for kw in 0..k {
                    let row = (c * k + kh) * k + kw;
                    let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                    for out_r in 0..oh {
                        let in_r = out_r as isize + kh as isize - p;
                        if in_r < 0 || in_r >= s.h as isize {
                            dst[out_r * ow..(out_r + 1) * ow].fill(0.0);
                            continue;
                        }
                        for out_c in 0..ow {
                            let in_c = out_c as isize + kw as isize - p;
                            dst[out_r * ow + out_c] = if in_c < 0 || in_c >= s.w as isize {
                                0.0
                            } else {
                                x.at(img, c, in_r as usize, in_c as usize)
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: accumulate column gradients back into the image.
    fn col2im(&self, dcol: &[f64], img: usize, dx: &mut Tensor) {
        let s = dx.shape();
        let k = self.kernel();
        let p = self.padding as isize;
        let oh = s.h + 2 * self.padding - k + 1;
        let ow = s.w + 2 * self.padding - k + 1;
        for c in 0..s.c {
            for kh in 0..k {
                for kw in 0..k {
                    let row = (c * k + kh) * k + kw;
                    let src = &dcol[row * oh * ow..(row + 1) * oh * ow];
                    for out_r in 0..oh {
                        let in_r = out_r as isize + kh as isize - p;
                        if in_r < 0 || in_r >= s.h as isize {
                            continue;
                        }
                        for out_c in 0..ow {
                            let in_c = out_c as isize + kw as isize - p;
                            if in_c < 0 || in_c >= s.w as isize {
                                continue;
                            }
                            let i = dx.idx(img, c, in_r as usize, in_c as usize);
                            dx.data_mut()[i] += src[out_r * ow + out_c];
                        }
                    }
                }
            }
        }
    }
}

/// Delta (identity) filters: filter `d` has a single 1 at the kernel center
/// of input channel `d`, zero elsewhere. With padding (K-1)/2 and
/// out_depth == in_depth the layer is the identity map.
pub fn delta_filters(out_depth: usize, in_depth: usize, k: usize) -> Tensor {
    let mut f = Tensor::zeros(Shape::new(out_depth, in_depth, k, k)).unwrap();
    for d in 0..out_depth {
        if d < in_depth {
            f.set(d, d, k / 2, k / 2, 1.0);
        }
    }
    f
}
