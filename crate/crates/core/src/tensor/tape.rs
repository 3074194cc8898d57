//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive evaluates eagerly and appends one node to the tape.
//! [`Tape::backward`] walks the nodes in reverse from a scalar root and
//! accumulates one gradient per grad-tracked leaf.

use std::rc::Rc;

use super::conv::{self, ConvGeometry};
use super::{Real, Tensor};
use crate::{contract, Result};

/// Smoothing added under every square root whose argument can reach zero.
pub const SQRT_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp<T> {
    /// Subgradient at 0 is 0.
    Relu,
    Sigmoid,
    /// Subgradient at 0 is 0.
    Abs,
    /// `sqrt(x + SQRT_EPS)`.
    Sqrt,
    /// `scale * x + shift`.
    Affine { scale: T, shift: T },
    /// Gradient is 1 inside `[lo, hi]` and 0 outside.
    Clamp { lo: T, hi: T },
    /// `1 / sin(pi * x)`.
    InvSinPi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
}

/// Inverse covariance used by the weighted Mahalanobis primitive.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric<T> {
    Identity,
    /// Diagonal of the inverse covariance.
    Diagonal(Vec<T>),
    /// Dense symmetric `dim x dim` inverse covariance, row-major.
    Full { dim: usize, inverse: Vec<T> },
}

impl<T: Real> Metric<T> {
    pub fn full(dim: usize, inverse: Vec<T>) -> Result<Self> {
        contract!(
            inverse.len() == dim * dim,
            "metric of dimension {dim} needs {} entries, got {}",
            dim * dim,
            inverse.len()
        );
        Ok(Metric::Full { dim, inverse })
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Metric::Identity => None,
            Metric::Diagonal(d) => Some(d.len()),
            Metric::Full { dim, .. } => Some(*dim),
        }
    }

    fn apply(&self, u: &[T], out: &mut [T]) {
        match self {
            Metric::Identity => out.copy_from_slice(u),
            Metric::Diagonal(d) => {
                for ((o, &x), &s) in out.iter_mut().zip(u).zip(d) {
                    *o = x * s;
                }
            }
            Metric::Full { dim, inverse } => {
                for (r, o) in out.iter_mut().enumerate() {
                    let row = &inverse[r * dim..(r + 1) * dim];
                    *o = row.iter().zip(u).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geometry: ConvGeometry,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Unary(Var, UnaryOp<T>),
    Reduce {
        input: Var,
        kind: ReduceKind,
        axes: Vec<usize>,
    },
    /// Gather: output element `i` copies input element `index[i]`.
    Gather { input: Var, index: Vec<usize> },
    WeightedMahalanobis {
        diffs: Var,
        weights: Var,
        metric: Rc<Metric<T>>,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of the primitives evaluated during one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Accumulated gradients of a scalar root, one per grad-tracked leaf.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a grad-tracked leaf; `None` for constants and interior nodes.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Copies the value of `v` into a fresh constant leaf (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.tracked(v)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(input).dims4()?;
        let (k_out, k_in, kh, kw) = self.value(weight).dims4()?;
        contract!(kh == kw, "conv2d kernel must be square, got {kh} x {kw}");
        contract!(kh % 2 == 1, "conv2d kernel size {kh} must be odd");
        contract!(k_in == c, "conv2d weight expects {k_in} input channels, input has {c}");
        contract!(stride >= 1, "conv2d stride must be positive");
        contract!(
            self.value(bias).shape() == [k_out],
            "conv2d bias shape {:?} does not match {k_out} output channels",
            self.value(bias).shape()
        );
        contract!(
            h + 2 * padding >= kh && w + 2 * padding >= kw,
            "conv2d kernel {kh} larger than padded input {h} x {w}"
        );
        contract!(
            (h + 2 * padding - kh) % stride == 0 && (w + 2 * padding - kw) % stride == 0,
            "conv2d output extent not integral for input {h} x {w}, kernel {kh}, stride {stride}, padding {padding}"
        );
        let geometry = ConvGeometry {
            batch: n,
            in_channels: c,
            height: h,
            width: w,
            out_channels: k_out,
            kernel: kh,
            stride,
            padding,
            out_height: (h + 2 * padding - kh) / stride + 1,
            out_width: (w + 2 * padding - kw) / stride + 1,
        };
        let data = conv::forward(
            &geometry,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(vec![n, k_out, geometry.out_height, geometry.out_width], data)?;
        let rg = self.tracked(input) || self.tracked(weight) || self.tracked(bias);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
            },
            rg,
        ))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<(Tensor<T>, bool)> {
        let (va, vb) = (self.value(a), self.value(b));
        contract!(
            va.shape() == vb.shape(),
            "{name}: operand shapes {:?} and {:?} differ",
            va.shape(),
            vb.shape()
        );
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok((value, self.tracked(a) || self.tracked(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, rg) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, rg) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, rg) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn unary(&mut self, x: Var, op: UnaryOp<T>) -> Result<Var> {
        let eps = T::from_f64_lossy(SQRT_EPS);
        let pi = T::from_f64_lossy(std::f64::consts::PI);
        let input = self.value(x);
        let value = match op {
            UnaryOp::Relu => input.map(|v: T| if v > T::zero() { v } else { T::zero() }),
            UnaryOp::Sigmoid => input.map(sigmoid),
            UnaryOp::Abs => input.map(|v: T| v.abs()),
            UnaryOp::Sqrt => {
                contract!(input.data().iter().all(|&v| v >= T::zero()), "sqrt of a negative value");
                input.map(move |v: T| (v + eps).sqrt())
            }
            UnaryOp::Affine { scale, shift } => input.map(move |v: T| scale * v + shift),
            UnaryOp::Clamp { lo, hi } => input.map(move |v: T| v.max(lo).min(hi)),
            UnaryOp::InvSinPi => input.map(move |v: T| T::one() / (pi * v).sin()),
        };
        let rg = self.tracked(x);
        Ok(self.push(value, Op::Unary(x, op), rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Sigmoid)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Abs)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Sqrt)
    }

    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        self.unary(x, UnaryOp::Affine { scale, shift })
    }

    pub fn scale(&mut self, x: Var, scale: T) -> Result<Var> {
        self.affine(x, scale, T::zero())
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -T::one(), T::one())
    }

    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        contract!(lo <= hi, "clamp bounds {lo} > {hi}");
        self.unary(x, UnaryOp::Clamp { lo, hi })
    }

    pub fn inv_sin_pi(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::InvSinPi)
    }

    /// Reduces over `axes`, removing them from the shape.
    pub fn reduce(&mut self, x: Var, kind: ReduceKind, axes: &[usize]) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        for (i, &a) in axes.iter().enumerate() {
            contract!(a < shape.len(), "reduce axis {a} out of range for shape {shape:?}");
            contract!(!axes[..i].contains(&a), "reduce axis {a} repeated");
        }
        let out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        let map = reduce_index_map(&shape, axes);
        let out_len: usize = out_shape.iter().product();
        let mut acc = vec![0.0f64; out_len];
        for (&o, v) in map.iter().zip(self.value(x).data()) {
            acc[o] += v.as_f64();
        }
        let count = (shape.iter().product::<usize>() / out_len.max(1)) as f64;
        let data = acc
            .into_iter()
            .map(|s| match kind {
                ReduceKind::Sum => T::from_f64_lossy(s),
                ReduceKind::Mean => T::from_f64_lossy(s / count),
            })
            .collect();
        let value = Tensor::new(out_shape, data)?;
        let rg = self.tracked(x);
        Ok(self.push(
            value,
            Op::Reduce {
                input: x,
                kind,
                axes: axes.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.reduce(x, ReduceKind::Sum, &axes)
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.reduce(x, ReduceKind::Mean, &axes)
    }

    fn gather(&mut self, x: Var, shape: Vec<usize>, index: Vec<usize>) -> Result<Var> {
        let src = self.value(x).data();
        let data = index.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(shape, data)?;
        let rg = self.tracked(x);
        Ok(self.push(value, Op::Gather { input: x, index }, rg))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    /// Ties route the gradient to the first maximum in row-major order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let (oh, ow) = (h / 2, w / 2);
        contract!(oh >= 1 && ow >= 1, "max_pool2 on {h} x {w} input");
        let src = self.value(x).data();
        let mut index = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    index.push(best);
                }
            }
        }
        self.gather(x, vec![n, c, oh, ow], index)
    }

    /// Nearest-neighbour resampling to a smaller grid: destination pixel `d`
    /// reads source `floor((d + 0.5) * src / dst)`.
    pub fn nearest_downsample(&mut self, x: Var, target_h: usize, target_w: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        contract!(
            target_h >= 1 && target_w >= 1,
            "nearest_downsample to zero extent {target_h} x {target_w}"
        );
        contract!(
            target_h <= h && target_w <= w,
            "nearest_downsample target {target_h} x {target_w} exceeds source {h} x {w}"
        );
        let rows = nearest_source_indices(h, target_h);
        let cols = nearest_source_indices(w, target_w);
        let mut index = Vec::with_capacity(n * c * target_h * target_w);
        for plane in 0..n * c {
            for &sy in &rows {
                for &sx in &cols {
                    index.push(plane * h * w + sy * w + sx);
                }
            }
        }
        self.gather(x, vec![n, c, target_h, target_w], index)
    }

    /// Mean over pixels of `sqrt((w d)^T S^-1 (w d) + eps)`.
    ///
    /// `diffs` is `1 x C x H x W` (one difference vector per pixel), `weights`
    /// is `1 x 1 x H x W`.
    pub fn weighted_mahalanobis(&mut self, diffs: Var, weights: Var, metric: Rc<Metric<T>>) -> Result<Var> {
        let (n, c, h, w) = self.value(diffs).dims4()?;
        contract!(n == 1, "weighted_mahalanobis expects batch 1, got {n}");
        contract!(
            self.value(weights).shape() == [1, 1, h, w],
            "weights shape {:?} does not match difference field {h} x {w}",
            self.value(weights).shape()
        );
        if let Some(dim) = metric.dim() {
            contract!(dim == c, "metric dimension {dim} does not match {c} channels");
        }
        let pixels = h * w;
        let d = self.value(diffs).data();
        let wt = self.value(weights).data();
        let eps = T::from_f64_lossy(SQRT_EPS);
        let mut u = vec![T::zero(); c];
        let mut su = vec![T::zero(); c];
        let mut acc = 0.0f64;
        for p in 0..pixels {
            for ch in 0..c {
                u[ch] = wt[p] * d[ch * pixels + p];
            }
            metric.apply(&u, &mut su);
            let q = dot(&u, &su);
            acc += (q + eps).sqrt().as_f64();
        }
        let value = Tensor::scalar(T::from_f64_lossy(acc / pixels as f64));
        let rg = self.tracked(diffs) || self.tracked(weights);
        Ok(self.push(
            value,
            Op::WeightedMahalanobis {
                diffs,
                weights,
                metric,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        contract!(root.0 < self.nodes.len(), "backward root is not on this tape");
        contract!(
            self.nodes[root.0].value.numel() == 1,
            "backward root must be scalar, got shape {:?}",
            self.nodes[root.0].value.shape()
        );
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(self.nodes[root.0].value.shape(), T::one()));

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let g = match node.op {
                Op::Leaf => continue,
                _ => match grads[id].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(id, &g, &mut grads)?;
        }

        for (id, node) in self.nodes.iter().enumerate() {
            let keep = matches!(node.op, Op::Leaf) && node.requires_grad;
            if !keep {
                grads[id] = None;
            } else if grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], target: Var, g: Tensor<T>) {
        if !self.tracked(target) {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, id: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
            } => {
                let need = [self.tracked(*input), self.tracked(*weight), self.tracked(*bias)];
                let out = conv::backward(
                    geometry,
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g.data(),
                    need,
                );
                if let Some(gi) = out.input {
                    self.accumulate(grads, *input, Tensor::new(self.value(*input).shape().to_vec(), gi)?);
                }
                if let Some(gw) = out.weight {
                    self.accumulate(grads, *weight, Tensor::new(self.value(*weight).shape().to_vec(), gw)?);
                }
                if let Some(gb) = out.bias {
                    self.accumulate(grads, *bias, Tensor::new(self.value(*bias).shape().to_vec(), gb)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.tracked(*a) {
                    let data = g.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), data)?);
                }
                if self.tracked(*b) {
                    let data = g.data().iter().zip(va.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::new(g.shape().to_vec(), data)?);
                }
            }
            Op::Unary(x, op) => {
                let xin = self.value(*x).data();
                let y = node.value.data();
                let pi = T::from_f64_lossy(std::f64::consts::PI);
                let half = T::from_f64_lossy(0.5);
                let two = T::from_f64_lossy(2.0);
                let data = g
                    .data()
                    .iter()
                    .zip(xin.iter().zip(y))
                    .map(|(&gv, (&xv, &yv))| {
                        let local = match *op {
                            UnaryOp::Relu => {
                                if xv > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            UnaryOp::Sigmoid => yv * (T::one() - yv),
                            UnaryOp::Abs => {
                                if xv > T::zero() {
                                    T::one()
                                } else if xv < T::zero() {
                                    -T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            UnaryOp::Sqrt => T::one() / (two * yv),
                            UnaryOp::Affine { scale, .. } => scale,
                            UnaryOp::Clamp { lo, hi } => {
                                if xv >= lo && xv <= hi {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            UnaryOp::InvSinPi => {
                                // cos(pi x) written as sin(pi (1/2 - x)) so the
                                // derivative is exactly zero at x = 1/2.
                                let s = (pi * xv).sin();
                                -pi * (pi * (half - xv)).sin() / (s * s)
                            }
                        };
                        gv * local
                    })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Reduce { input, kind, axes } => {
                let shape = self.value(*input).shape();
                let map = reduce_index_map(shape, axes);
                let scale = match kind {
                    ReduceKind::Sum => T::one(),
                    ReduceKind::Mean => {
                        let count = shape.iter().product::<usize>() / g.numel().max(1);
                        T::one() / T::from_f64_lossy(count as f64)
                    }
                };
                let data = map.iter().map(|&o| g.data()[o] * scale).collect();
                self.accumulate(grads, *input, Tensor::new(shape.to_vec(), data)?);
            }
            Op::Gather { input, index } => {
                let mut data = vec![T::zero(); self.value(*input).numel()];
                for (&i, &gv) in index.iter().zip(g.data()) {
                    data[i] += gv;
                }
                self.accumulate(grads, *input, Tensor::new(self.value(*input).shape().to_vec(), data)?);
            }
            Op::WeightedMahalanobis {
                diffs,
                weights,
                metric,
            } => {
                let (_, c, h, w) = self.value(*diffs).dims4()?;
                let pixels = h * w;
                let d = self.value(*diffs).data();
                let wt = self.value(*weights).data();
                let eps = T::from_f64_lossy(SQRT_EPS);
                let upstream = g.item()? / T::from_f64_lossy(pixels as f64);
                let mut gd = self.tracked(*diffs).then(|| vec![T::zero(); d.len()]);
                let mut gw = self.tracked(*weights).then(|| vec![T::zero(); wt.len()]);
                let mut u = vec![T::zero(); c];
                let mut su = vec![T::zero(); c];
                for p in 0..pixels {
                    for ch in 0..c {
                        u[ch] = wt[p] * d[ch * pixels + p];
                    }
                    metric.apply(&u, &mut su);
                    let val = (dot(&u, &su) + eps).sqrt();
                    let coef = upstream / val;
                    if let Some(gd) = gd.as_mut() {
                        for ch in 0..c {
                            gd[ch * pixels + p] += coef * wt[p] * su[ch];
                        }
                    }
                    if let Some(gw) = gw.as_mut() {
                        let mut s = T::zero();
                        for ch in 0..c {
                            s += d[ch * pixels + p] * su[ch];
                        }
                        gw[p] += coef * s;
                    }
                }
                if let Some(gd) = gd {
                    self.accumulate(grads, *diffs, Tensor::new(self.value(*diffs).shape().to_vec(), gd)?);
                }
                if let Some(gw) = gw {
                    self.accumulate(grads, *weights, Tensor::new(self.value(*weights).shape().to_vec(), gw)?);
                }
            }
        }
        Ok(())
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// For every input element, the flat index of the output element it reduces into.
fn reduce_index_map(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let numel: usize = shape.iter().product();
    let rank = shape.len();
    // Output stride of each input axis (0 for reduced axes).
    let mut out_stride = vec![0usize; rank];
    let mut stride = 1;
    for a in (0..rank).rev() {
        if !axes.contains(&a) {
            out_stride[a] = stride;
            stride *= shape[a];
        }
    }
    let mut map = Vec::with_capacity(numel);
    let mut coord = vec![0usize; rank];
    for _ in 0..numel {
        map.push(coord.iter().zip(&out_stride).map(|(c, s)| c * s).sum());
        for a in (0..rank).rev() {
            coord[a] += 1;
            if coord[a] < shape[a] {
                break;
            }
            coord[a] = 0;
        }
    }
    map
}

fn nearest_source_indices(src: usize, dst: usize) -> Vec<usize> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| (((d as f64 + 0.5) * scale).floor() as usize).min(src - 1))
        .collect()
}
