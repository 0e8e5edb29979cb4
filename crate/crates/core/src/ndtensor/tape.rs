//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! Every operation appends a node holding its primal value and whatever
//! context its backward rule needs. Node ids are handed out in insertion
//! order, so the tape is already topologically sorted and the backward pass
//! is a single reverse sweep.

use crate::error::{Error, Result};
use crate::ndtensor::kernels::{self, BatchNormCache, BatchStats, ConvGeometry};
use crate::ndtensor::tensor::{self as tk, BinaryOp, ReduceOp, Tensor};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate backward-rule corruption, used to prove the gradient checker bites.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    SigmoidBackwardSignFlip,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Binary(BinaryOp, Var, Var),
    Scale(Var, T),
    Shift(Var),
    Matmul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Reduce {
        x: Var,
        op: ReduceOp,
        kept: Vec<usize>,
        argmax: Option<Vec<usize>>,
    },
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Slice(Var, Vec<(usize, usize)>),
    BroadcastTo(Var),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: BatchNormCache<T>,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Binary(_, a, b) | Op::Matmul(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Shift(x)
            | Op::Reduce { x, .. }
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Softmax(x)
            | Op::Reshape(x)
            | Op::Permute(x, _)
            | Op::Slice(x, _)
            | Op::BroadcastTo(x) => vec![*x],
            Op::Linear { x, w, b } | Op::Conv { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::Concat(xs, _) => xs.clone(),
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Append-only computation record.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    fault: Option<Fault>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`, or `None` when `v` does not influence it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of the loss w.r.t. `v`, zero-filled when unreachable.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]).expect("node shapes are valid"),
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        let inputs = op.inputs();
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        if cfg!(debug_assertions) && !value.all_finite() {
            let inputs_finite = inputs.iter().all(|i| self.nodes[i.0].value.all_finite());
            assert!(!inputs_finite, "non-finite value produced from finite inputs by {op:?}");
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that gradients are tracked for.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that gradients are not tracked for.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let v = tk::elementwise(op, self.value(a), self.value(b))?;
        Ok(self.push(Op::Binary(op, a, b), v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Mul, a, b)
    }

    /// `x * c` for a constant `c`.
    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|e| e * c);
        self.push(Op::Scale(x, c), v)
    }

    /// `x + c` for a constant `c`.
    pub fn shift(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|e| e + c);
        self.push(Op::Shift(x), v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tk::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    /// Affine map over the last axis: `x[..,in] · w[out,in]ᵀ + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.rank() != 2 || xv.shape().last() != Some(&wv.shape()[1]) {
            return Err(Error::ShapeMismatch(format!(
                "linear: input {:?} against weight {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let (out, inp) = (wv.shape()[0], wv.shape()[1]);
        if let Some(b) = b {
            if self.value(b).shape() != [out] {
                return Err(Error::ShapeMismatch(format!(
                    "linear bias {:?} for {out} outputs",
                    self.value(b).shape()
                )));
            }
        }
        let rows = xv.numel() / inp;
        let mut y = Vec::with_capacity(rows * out);
        let (xd, wd) = (xv.data(), wv.data());
        let bd = b.map(|b| self.value(b).data());
        for r in 0..rows {
            let xr = &xd[r * inp..(r + 1) * inp];
            for o in 0..out {
                let wr = &wd[o * inp..(o + 1) * inp];
                let mut s = bd.map_or(T::zero(), |bd| bd[o]);
                for (&a, &w) in xr.iter().zip(wr) {
                    s += a * w;
                }
                y.push(s);
            }
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = out;
        let v = Tensor::from_raw(shape, y);
        Ok(self.push(Op::Linear { x, w, b }, v))
    }

    pub fn reduce(&mut self, op: ReduceOp, x: Var, axes: &[usize], keepdims: bool) -> Result<Var> {
        let xv = self.value(x);
        let r = tk::reduce(op, xv, axes, keepdims)?;
        let mask = tk::normalize_axes(xv.rank(), axes)?;
        let kept = tk::reduced_shape(xv.shape(), &mask, true);
        Ok(self.push(
            Op::Reduce {
                x,
                op,
                kept,
                argmax: r.argmax,
            },
            r.value,
        ))
    }

    pub fn sum(&mut self, x: Var, axes: &[usize], keepdims: bool) -> Result<Var> {
        self.reduce(ReduceOp::Sum, x, axes, keepdims)
    }

    pub fn mean(&mut self, x: Var, axes: &[usize], keepdims: bool) -> Result<Var> {
        self.reduce(ReduceOp::Mean, x, axes, keepdims)
    }

    pub fn max(&mut self, x: Var, axes: &[usize], keepdims: bool) -> Result<Var> {
        self.reduce(ReduceOp::Max, x, axes, keepdims)
    }

    /// Sum over every element, shaped `[1]`.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.sum(x, &axes, false).expect("all axes are valid")
    }

    /// Mean over every element, shaped `[1]`.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let axes: Vec<usize> = (0..self.value(x).rank()).collect();
        self.mean(x, &axes, false).expect("all axes are valid")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| if e > T::zero() { e } else { T::zero() });
        self.push(Op::Relu(x), v)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), v)
    }

    pub fn softmax_lastaxis(&mut self, x: Var) -> Var {
        let v = tk::softmax_lastaxis(self.value(x));
        self.push(Op::Softmax(x), v)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape(x), v))
    }

    pub fn permute(&mut self, x: Var, order: &[usize]) -> Result<Var> {
        let v = tk::permute(self.value(x), order)?;
        Ok(self.push(Op::Permute(x, order.to_vec()), v))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let r = self.value(x).rank();
        if r < 2 {
            return Err(Error::InvalidAxis("transpose needs rank >= 2".into()));
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.swap(r - 2, r - 1);
        self.permute(x, &order)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = xs.iter().map(|&x| self.value(x)).collect();
        let v = tk::concat(&vals, axis)?;
        Ok(self.push(Op::Concat(xs.to_vec(), axis), v))
    }

    /// Box slice; one half-open `(start, end)` range per axis.
    pub fn slice(&mut self, x: Var, ranges: &[(usize, usize)]) -> Result<Var> {
        let v = tk::slice(self.value(x), ranges)?;
        Ok(self.push(Op::Slice(x, ranges.to_vec()), v))
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = tk::broadcast_to(self.value(x), shape)?;
        Ok(self.push(Op::BroadcastTo(x), v))
    }

    /// 3D cross-correlation, `x[N,Cin,T,H,W]`, `w[Cout,Cin,kt,kh,kw]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let v = kernels::conv3d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), &geom)?;
        Ok(self.push(Op::Conv { x, w, b, geom }, v))
    }

    /// 2D cross-correlation, `x[N,Cin,H,W]`, `w[Cout,Cin,kh,kw]`, expressed as a
    /// depth-1 3D convolution.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "conv2d expects rank-4 input and weight, got {xs:?} and {ws:?}"
            )));
        }
        let x5 = self.reshape(x, &[xs[0], xs[1], 1, xs[2], xs[3]])?;
        let w5 = self.reshape(w, &[ws[0], ws[1], 1, ws[2], ws[3]])?;
        let y = self.conv3d(x5, w5, b, ConvGeometry::new([1, stride, stride], [0, pad, pad]))?;
        let ys = self.value(y).shape().to_vec();
        self.reshape(y, &[ys[0], ys[1], ys[3], ys[4]])
    }

    /// Batch normalization over axis 1. `running = None` selects train mode and
    /// returns the batch statistics for the caller's running-stat update.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[T], &[T])>,
        eps: T,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let (y, cache, stats) =
            kernels::batchnorm_forward(self.value(x), self.value(gamma), self.value(beta), running, eps)?;
        Ok((self.push(Op::BatchNorm { x, gamma, beta, cache }, y), stats))
    }

    /// Back-propagates from a single-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(lv.ones_like());
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.needs(v) {
            return;
        }
        debug_assert_eq!(g.shape(), self.value(v).shape(), "gradient shape for node {}", v.0);
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Binary(op, a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ga, gb) = match op {
                    BinaryOp::Add => (g.clone(), g.clone()),
                    BinaryOp::Sub => (g.clone(), g.map(|e| -e)),
                    BinaryOp::Mul => (
                        tk::elementwise(BinaryOp::Mul, g, bv).expect("broadcast shape"),
                        tk::elementwise(BinaryOp::Mul, g, av).expect("broadcast shape"),
                    ),
                };
                if self.needs(*a) {
                    self.accumulate(grads, *a, tk::unbroadcast(&ga, av.shape()));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, tk::unbroadcast(&gb, bv.shape()));
                }
            }
            Op::Scale(x, c) => {
                let c = *c;
                self.accumulate(grads, *x, g.map(|e| e * c));
            }
            Op::Shift(x) => self.accumulate(grads, *x, g.clone()),
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let ga = tk::matmul(g, &tk::transpose_last(bv)).expect("matmul shapes");
                    self.accumulate(grads, *a, unbroadcast_batch(&ga, av.shape()));
                }
                if self.needs(*b) {
                    let gb = tk::matmul(&tk::transpose_last(av), g).expect("matmul shapes");
                    self.accumulate(grads, *b, unbroadcast_batch(&gb, bv.shape()));
                }
            }
            Op::Linear { x, w, b } => self.linear_backward(*x, *w, *b, g, grads),
            Op::Reduce { x, op, kept, argmax } => {
                let xv = self.value(*x);
                let gk = g.reshape(kept).expect("kept shape has same size");
                let gx = match op {
                    ReduceOp::Sum => tk::broadcast_to(&gk, xv.shape()).expect("kept shape broadcasts"),
                    ReduceOp::Mean => {
                        let count = T::lit((xv.numel() / gk.numel()) as f64);
                        tk::broadcast_to(&gk, xv.shape())
                            .expect("kept shape broadcasts")
                            .map(|e| e / count)
                    }
                    ReduceOp::Max => {
                        let mut d = vec![T::zero(); xv.numel()];
                        for (&i, &gv) in argmax.as_ref().expect("max saves argmax").iter().zip(gk.data()) {
                            d[i] += gv;
                        }
                        Tensor::from_raw(xv.shape().to_vec(), d)
                    }
                };
                self.accumulate(grads, *x, gx);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, Tensor::from_raw(g.shape().to_vec(), d));
            }
            Op::Sigmoid(x) => {
                let sign = if self.fault == Some(Fault::SigmoidBackwardSignFlip) {
                    -T::one()
                } else {
                    T::one()
                };
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&gv, &s)| sign * gv * s * (T::one() - s))
                    .collect();
                self.accumulate(grads, *x, Tensor::from_raw(g.shape().to_vec(), d));
            }
            Op::Softmax(x) => {
                // dx = s * (g - sum(g * s)) row-wise
                let n = *g.shape().last().unwrap();
                let mut d = vec![T::zero(); g.numel()];
                for ((dr, gr), sr) in d.chunks_mut(n).zip(g.data().chunks(n)).zip(node.value.data().chunks(n)) {
                    let dot: T = gr.iter().zip(sr).map(|(&a, &b)| a * b).sum();
                    for ((dv, &gv), &sv) in dr.iter_mut().zip(gr).zip(sr) {
                        *dv = sv * (gv - dot);
                    }
                }
                self.accumulate(grads, *x, Tensor::from_raw(g.shape().to_vec(), d));
            }
            Op::Reshape(x) => {
                let gx = g.reshape(self.value(*x).shape()).expect("same size");
                self.accumulate(grads, *x, gx);
            }
            Op::Permute(x, order) => {
                let gx = tk::permute(g, &tk::inverse_permutation(order)).expect("valid permutation");
                self.accumulate(grads, *x, gx);
            }
            Op::Concat(xs, axis) => {
                let extents: Vec<usize> = xs.iter().map(|&x| self.value(x).shape()[*axis]).collect();
                for (x, piece) in xs.iter().zip(tk::split(g, *axis, &extents)) {
                    self.accumulate(grads, *x, piece);
                }
            }
            Op::Slice(x, ranges) => {
                let gx = tk::scatter_slice(g, self.value(*x).shape(), ranges);
                self.accumulate(grads, *x, gx);
            }
            Op::BroadcastTo(x) => {
                let gx = tk::unbroadcast(g, self.value(*x).shape());
                self.accumulate(grads, *x, gx);
            }
            Op::Conv { x, w, b, geom } => {
                let need_dx = self.needs(*x);
                let (dx, dw, db) = kernels::conv3d_backward(self.value(*x), self.value(*w), g, geom, need_dx);
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *w, dw);
                if let Some(b) = b {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::BatchNorm { x, gamma, beta, cache } => {
                let (dx, dg, db) = kernels::batchnorm_backward(cache, self.value(*gamma), g);
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gamma, dg);
                self.accumulate(grads, *beta, db);
            }
        }
    }

    fn linear_backward(&self, x: Var, w: Var, b: Option<Var>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let (xv, wv) = (self.value(x), self.value(w));
        let (out, inp) = (wv.shape()[0], wv.shape()[1]);
        let rows = xv.numel() / inp;
        let (xd, wd, gd) = (xv.data(), wv.data(), g.data());
        if self.needs(x) {
            let mut dx = vec![T::zero(); xv.numel()];
            for r in 0..rows {
                let dr = &mut dx[r * inp..(r + 1) * inp];
                for o in 0..out {
                    let gv = gd[r * out + o];
                    for (d, &wv) in dr.iter_mut().zip(&wd[o * inp..(o + 1) * inp]) {
                        *d += gv * wv;
                    }
                }
            }
            self.accumulate(grads, x, Tensor::from_raw(xv.shape().to_vec(), dx));
        }
        if self.needs(w) {
            let mut dw = vec![T::zero(); wv.numel()];
            for r in 0..rows {
                let xr = &xd[r * inp..(r + 1) * inp];
                for o in 0..out {
                    let gv = gd[r * out + o];
                    for (d, &xv) in dw[o * inp..(o + 1) * inp].iter_mut().zip(xr) {
                        *d += gv * xv;
                    }
                }
            }
            self.accumulate(grads, w, Tensor::from_raw(wv.shape().to_vec(), dw));
        }
        if let Some(b) = b {
            let mut db = vec![T::zero(); out];
            for r in 0..rows {
                for (d, &gv) in db.iter_mut().zip(&gd[r * out..(r + 1) * out]) {
                    *d += gv;
                }
            }
            self.accumulate(grads, b, Tensor::from_raw(vec![out], db));
        }
    }
}

/// Logistic function, clamped so that large |x| stays strictly inside (0, 1).
#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    s.max(T::min_positive_value())
        .min(T::one() - T::epsilon() / T::lit(2.0))
}

/// Reduces a batched matmul gradient back to an operand's (possibly lower-rank
/// or stretched) batch shape.
fn unbroadcast_batch<T: Scalar>(g: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if g.shape() == shape {
        return g.clone();
    }
    let r = g.rank();
    let mut target = vec![1; r.saturating_sub(shape.len())];
    target.extend_from_slice(shape);
    let summed = tk::unbroadcast(g, &target);
    summed.reshape(shape).expect("same element count")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_grad_is_ones_and_square_grad_is_twice_x() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let s = tape.sum_all(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0, 1.0, 1.0]);

        let sq = tape.mul(x, x).unwrap();
        let l = tape.sum_all(sq);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x).data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros(&[2]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        let c = tape.constant(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
        let y = tape.mul(x, c).unwrap();
        let l = tape.sum_all(y);
        let g = tape.backward(l).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(c).data(), &[0.0, 0.0]);
        assert_eq!(g.wrt(x).data(), &[3.0, 4.0]);
    }

    #[test]
    fn two_backward_passes_are_bitwise_equal() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_fn(&[2, 3], |i| (i as f64).sin()).unwrap());
        let s = tape.sigmoid(x);
        let m = tape.softmax_lastaxis(s);
        let p = tape.mul(m, x).unwrap();
        let l = tape.sum_all(p);
        let g1 = tape.backward(l).unwrap().wrt(x);
        let g2 = tape.backward(l).unwrap().wrt(x);
        assert_eq!(
            g1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            g2.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(&[3], vec![-3.0, 0.0, 3.0]).unwrap());
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0]);
        let l = tape.sum_all(r);
        assert_eq!(tape.backward(l).unwrap().wrt(x).data(), &[0.0, 0.0, 1.0]);
    }
}
