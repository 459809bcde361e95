//! Non-overlapping max/average pooling, ordered pooling stacks, and the
//! route-mask instrumentation that counts and localizes active
//! backpropagation routes.
//!
//! A stack written `AP3,MP2` applies `AP(3)` first (closest to the input),
//! then `MP(2)`. Max pooling routes each upstream gradient entirely to the
//! argmax position of its window; average pooling fans it out uniformly
//! with weight 1/k^2. Composing the two therefore produces very different
//! gradient supports depending on order:
//!
//! ```
//! use poolnet::pooling::PoolingStack;
//! use poolnet::tensor::{Shape, Tensor};
//!
//! let x = Tensor::from_vec(
//!     Shape::new(1, 1, 6, 6),
//!     (0..36).map(|i| ((i * 37 + 11) % 97) as f64).collect(),
//! ).unwrap();
//! let stack: PoolingStack = "AP3,MP2".parse().unwrap();
//! let mask = stack.route_mask(&x).unwrap();
//! assert_eq!(mask.count(), 9); // one contiguous 3x3 block
//! ```

use crate::error::{Error, Result};
use crate::tensor::{argmax_window, Shape, Tensor};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolKind {
    Max,
    Avg,
}

/// One pooling operator: kind plus window size; stride always equals window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingOp {
    pub kind: PoolKind,
    pub window: usize,
}

impl PoolingOp {
    pub fn max(window: usize) -> Self {
        PoolingOp {
            kind: PoolKind::Max,
            window,
        }
    }

    pub fn avg(window: usize) -> Self {
        PoolingOp {
            kind: PoolKind::Avg,
            window,
        }
    }

    /// Forward pass. For `Max` the memo records the argmax position of every
    /// window, which the backward pass routes gradients through.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolMemo)> {
        let k = self.window;
        let s = x.shape();
        let out_shape = Shape::new(s.n, s.c, s.h / k.max(1), s.w / k.max(1));
        let mut y = Vec::new();
        let mut argmax = Vec::new();
        for block in x.window_iter(k)? {
            match self.kind {
                PoolKind::Max => {
                    let (i, v) = argmax_window(&block.values);
                    y.push(v);
                    argmax.push(i);
                }
                PoolKind::Avg => {
                    let mean = block.values.iter().sum::<f64>() / (k * k) as f64;
                    y.push(mean);
                }
            }
        }
        let memo = PoolMemo {
            op: *self,
            in_shape: s,
            argmax,
        };
        Ok((Tensor::from_vec(out_shape, y)?, memo))
    }

    /// Exact adjoint of `forward`, using the memo captured there.
    pub fn backward(&self, memo: &PoolMemo, grad_out: &Tensor) -> Result<Tensor> {
        if memo.op != *self {
            return Err(Error::ShapeMismatch {
                expected: format!("memo for {self}"),
                got: format!("memo for {}", memo.op),
            });
        }
        let k = self.window;
        let s = memo.in_shape;
        let expect = Shape::new(s.n, s.c, s.h / k, s.w / k);
        if grad_out.shape() != expect {
            return Err(Error::ShapeMismatch {
                expected: expect.to_string(),
                got: grad_out.shape().to_string(),
            });
        }
        let mut grad_in = Tensor::zeros(s)?;
        let bw = s.w / k;
        for (out_i, &g) in grad_out.data().iter().enumerate() {
            let col = out_i % bw;
            let row = (out_i / bw) % (s.h / k);
            let ch = (out_i / (bw * (s.h / k))) % s.c;
            let b = out_i / (bw * (s.h / k) * s.c);
            match self.kind {
                PoolKind::Max => {
                    let a = memo.argmax[out_i];
                    let dh = a / k;
                    let dw = a % k;
                    let i = grad_in.idx(b, ch, row * k + dh, col * k + dw);
                    grad_in.data_mut()[i] += g;
                }
                PoolKind::Avg => {
                    let share = g / (k * k) as f64;
                    for dh in 0..k {
                        for dw in 0..k {
                            let i = grad_in.idx(b, ch, row * k + dh, col * k + dw);
                            grad_in.data_mut()[i] += share;
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

impl fmt::Display for PoolingOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PoolKind::Max => write!(f, "MP{}", self.window),
            PoolKind::Avg => write!(f, "AP{}", self.window),
        }
    }
}

/// Forward-pass memo of a single pooling operator.
#[derive(Debug, Clone)]
pub struct PoolMemo {
    op: PoolingOp,
    in_shape: Shape,
    /// Per-window argmax (row-major within the window); empty for Avg.
    argmax: Vec<usize>,
}

/// Ordered composition of pooling operators, index 0 applied first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingStack {
    pub ops: Vec<PoolingOp>,
}

impl PoolingStack {
    pub fn new(ops: Vec<PoolingOp>) -> Self {
        PoolingStack { ops }
    }

    /// Product of the windows; the stack's total spatial reduction factor.
    pub fn total_window(&self) -> usize {
        self.ops.iter().map(|op| op.window).product()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<PoolMemo>)> {
        let mut cur = x.clone();
        let mut memos = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let (y, memo) = op.forward(&cur)?;
            memos.push(memo);
            cur = y;
        }
        Ok((cur, memos))
    }

    pub fn backward(&self, memos: &[PoolMemo], grad_out: &Tensor) -> Result<Tensor> {
        let mut grad = grad_out.clone();
        for (op, memo) in self.ops.iter().zip(memos.iter()).rev() {
            grad = op.backward(memo, &grad)?;
        }
        Ok(grad)
    }

    /// Positions of the stack input that receive nonzero gradient when every
    /// stack output is given unit upstream gradient.
    pub fn route_mask(&self, x: &Tensor) -> Result<RouteMask> {
        let (y, memos) = self.forward(x)?;
        let ones = Tensor::full(y.shape(), 1.0)?;
        let grad_in = self.backward(&memos, &ones)?;
        Ok(RouteMask {
            shape: x.shape(),
            mask: grad_in.data().iter().map(|&g| g.abs() > 0.0).collect(),
        })
    }
}

impl FromStr for PoolingStack {
    type Err = Error;

    /// Parses `"AP3,MP2"`: comma-separated `AP<k>`/`MP<k>`, leftmost first.
    fn from_str(s: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for tok in s.split(',') {
            let tok = tok.trim();
            let (kind, num) = if let Some(rest) = tok.strip_prefix("MP") {
                (PoolKind::Max, rest)
            } else if let Some(rest) = tok.strip_prefix("AP") {
                (PoolKind::Avg, rest)
            } else {
                return Err(Error::Config(format!(
                    "bad pooling token `{tok}` (expected AP<k> or MP<k>)"
                )));
            };
            let window: usize = num
                .parse()
                .map_err(|_| Error::Config(format!("bad pooling window in `{tok}`")))?;
            if window < 2 {
                return Err(Error::Config(format!("pooling window must be >= 2: `{tok}`")));
            }
            ops.push(PoolingOp { kind, window });
        }
        if ops.is_empty() {
            return Err(Error::Config("empty pooling stack".into()));
        }
        Ok(PoolingStack { ops })
    }
}

impl fmt::Display for PoolingStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let toks: Vec<String> = self.ops.iter().map(|op| op.to_string()).collect();
        write!(f, "{}", toks.join(","))
    }
}

/// Boolean mask over a stack input marking positions on an active
/// backpropagation route.
#[derive(Debug, Clone)]
pub struct RouteMask {
    pub shape: Shape,
    pub mask: Vec<bool>,
}

impl RouteMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> bool {
        self.mask[((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w]
    }
}

/// Route statistics for one pooling window of a stack input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowRouteReport {
    pub batch: usize,
    pub channel: usize,
    /// Window position in units of windows.
    pub row: usize,
    pub col: usize,
    /// Number of active routes in the window.
    pub count: usize,
    /// Side of the smallest grid-aligned square tile (side dividing the
    /// window) that contains every active route. A route set confined to one
    /// pooling sub-block reports that sub-block's side; routes spread over
    /// several sub-blocks at every granularity report the full window side.
    pub bounding_box: usize,
    /// True iff the bounding box side is strictly less than the window side.
    pub localized: bool,
}

/// Per-window route reports over a full mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteReport {
    pub window: usize,
    pub windows: Vec<WindowRouteReport>,
}

/// Summarize a route mask window by window.
///
/// `window` must be the stack's total reduction factor so that each window
/// corresponds to exactly one stack output unit.
pub fn route_report(mask: &RouteMask, window: usize) -> Result<RouteReport> {
    let s = mask.shape;
    if window == 0 || s.h % window != 0 || s.w % window != 0 {
        return Err(Error::NotDivisible {
            extent: s.h,
            window,
        });
    }
    let mut windows = Vec::new();
    for b in 0..s.n {
        for c in 0..s.c {
            for row in 0..s.h / window {
                for col in 0..s.w / window {
                    let mut active = Vec::new();
                    for dh in 0..window {
                        for dw in 0..window {
                            if mask.at(b, c, row * window + dh, col * window + dw) {
                                active.push((dh, dw));
                            }
                        }
                    }
                    let count = active.len();
                    let bounding_box = if count == 0 {
                        0
                    } else {
                        // Smallest divisor k of the window whose aligned
                        // k-by-k tiling puts every route in one tile.
                        (1..=window)
                            .filter(|k| window % k == 0)
                            .find(|&k| {
                                let tile = (active[0].0 / k, active[0].1 / k);
                                active.iter().all(|&(dh, dw)| (dh / k, dw / k) == tile)
                            })
                            .unwrap_or(window)
                    };
                    windows.push(WindowRouteReport {
                        batch: b,
                        channel: c,
                        row,
                        col,
                        count,
                        bounding_box,
                        localized: count > 0 && bounding_box < window,
                    });
                }
            }
        }
    }
    Ok(RouteReport { window, windows })
}

/// All 2^n ordered stacks of n (2x2) operators, each slot Max or Avg.
///
/// Deterministic order: stack `i` assigns slot `j` Max when bit `j` of `i`
/// is 0, Avg when it is 1, so `n = 1` yields `[[MP2], [AP2]]`.
pub fn enumerate_stacks(n: u32) -> Vec<PoolingStack> {
    let mut out = Vec::with_capacity(1 << n);
    for i in 0..(1u64 << n) {
        let ops = (0..n)
            .map(|j| {
                if (i >> j) & 1 == 0 {
                    PoolingOp::max(2)
                } else {
                    PoolingOp::avg(2)
                }
            })
            .collect();
        out.push(PoolingStack::new(ops));
    }
    out
}
