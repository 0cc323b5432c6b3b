//! Recorded computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every training step: leaves are constants,
//! differentiable inputs, or named [`Parameter`] bindings, and every op
//! appends one node whose inputs precede it. Node order is therefore a
//! topological order and [`Graph::backward`] is a single reverse sweep.

use std::collections::HashMap;

use rand::Rng;

use super::kernels::{self, ConvDims};
use super::{Parameter, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine(NodeId, f64),
    Relu(NodeId),
    Dropout(NodeId, Vec<f64>),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        dims: ConvDims,
    },
    MaxPoolTime(NodeId, Vec<usize>),
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    MatMulT(NodeId, NodeId),
    L2Normalize(NodeId, Vec<f64>),
    RowDot(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SoftCrossEntropy {
        logits: NodeId,
        targets: Tensor,
        softmax: Vec<f64>,
        denom: f64,
    },
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    ConcatCols(NodeId, NodeId),
    Reshape(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Graph(format!("node {} was not recorded", id.0)))
        }
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf; its gradient is readable through [`Graph::grad`].
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a named parameter. Binding the same name twice returns the
    /// first node, so one parameter shared by several forward passes
    /// collects a single summed gradient.
    pub fn param(&mut self, name: &str, p: &Parameter) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(p.value.clone(), Op::Leaf, p.trainable);
        self.params.insert(name.to_string(), id);
        id
    }

    /// Copies a node's value into a fresh constant. Gradients stop here.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.constant(v)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn param_grad(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|&id| self.grad(id))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, op: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("{op}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn dims2(&self, id: NodeId, op: &str) -> Result<(usize, usize)> {
        match *self.value(id).shape() {
            [n, d] => Ok((n, d)),
            ref s => Err(Error::Shape(format!("{op} expects a 2-D input, got {s:?}"))),
        }
    }

    fn zip_with(&mut self, a: NodeId, b: NodeId, name: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<NodeId> {
        self.same_shape(a, b, name)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let out = self.value(a).map(|v| scale * v + shift);
        let rg = self.rg(&[a]);
        self.push(out, Op::Affine(a, scale), rg)
    }

    pub fn scale(&mut self, a: NodeId, scale: f64) -> NodeId {
        self.affine(a, scale, 0.0)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    /// Inverted dropout: kept activations are scaled by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: NodeId, p: f64, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} not in [0, 1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let v = self.value(a);
        let data = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(x).ndim() != 3 {
            return Err(Error::Shape(format!(
                "graph conv1d expects [B, C, L], got {:?}",
                self.value(x).shape()
            )));
        }
        let out = kernels::conv1d(self.value(x), self.value(w), self.value(b))?;
        let dims = ConvDims::infer(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(out, Op::Conv1d { x, w, b, dims }, rg))
    }

    /// Global max over the last axis: `[B, C, L] -> [B, C]`.
    pub fn max_pool_time(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let [b, c, l] = *v.shape() else {
            return Err(Error::Shape(format!("max_pool_time expects [B, C, L], got {:?}", v.shape())));
        };
        let mut out = Vec::with_capacity(b * c);
        let mut arg = Vec::with_capacity(b * c);
        for row in v.data().chunks_exact(l) {
            let (i, m) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, &x)| if x > bm { (i, x) } else { (bi, bm) });
            out.push(m);
            arg.push(i);
        }
        let t = Tensor::new(vec![b, c], out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::MaxPoolTime(a, arg), rg))
    }

    /// `x [N, in] · w[out, in]^T + b[out]`
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, din) = self.dims2(x, "linear")?;
        let (dout, win) = self.dims2(w, "linear weight")?;
        if win != din || self.value(b).shape() != [dout] {
            return Err(Error::Shape(format!(
                "linear: input {:?}, weight {:?}, bias {:?}",
                self.value(x).shape(),
                self.value(w).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = kernels::matmul_t(self.value(x).data(), self.value(w).data(), n, dout, din);
        let bias = self.value(b).data();
        for row in out.chunks_exact_mut(dout) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let t = Tensor::new(vec![n, dout], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(t, Op::Linear { x, w, b }, rg))
    }

    /// `a [N, D] · b[M, D]^T -> [N, M]`
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, d) = self.dims2(a, "matmul_t")?;
        let (m, d2) = self.dims2(b, "matmul_t")?;
        if d != d2 {
            return Err(Error::Shape(format!("matmul_t inner dims {d} vs {d2}")));
        }
        let out = kernels::matmul_t(self.value(a).data(), self.value(b).data(), n, m, d);
        let t = Tensor::new(vec![n, m], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::MatMulT(a, b), rg))
    }

    /// Scales each row of a 2-D tensor to unit Euclidean norm.
    pub fn l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let (_, d) = self.dims2(a, "l2_normalize")?;
        let v = self.value(a);
        let mut norms = Vec::new();
        let mut out = Vec::with_capacity(v.numel());
        for row in v.data().chunks_exact(d) {
            let n = kernels::dot(row, row).sqrt();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::InvalidArgument("cannot normalize a zero-norm vector".into()));
            }
            norms.push(n);
            out.extend(row.iter().map(|x| x / n));
        }
        let t = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::L2Normalize(a, norms), rg))
    }

    /// Row-wise inner product: `[N, D] x [N, D] -> [N]`.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "row_dot")?;
        let (_, d) = self.dims2(a, "row_dot")?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .chunks_exact(d)
            .zip(self.value(b).data().chunks_exact(d))
            .map(|(x, y)| kernels::dot(x, y))
            .collect();
        let t = Tensor::vector(out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::RowDot(a, b), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let m = v.sum() / v.numel() as f64;
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// `-(1/denom) Σ_rows Σ_c targets[r, c] · log softmax(logits[r])[c]`.
    ///
    /// Targets are held constant. Rows of zeros contribute nothing, which
    /// lets callers mask unlabelled samples.
    pub fn soft_cross_entropy(&mut self, logits: NodeId, targets: Tensor, denom: f64) -> Result<NodeId> {
        let (_, c) = self.dims2(logits, "soft_cross_entropy")?;
        if targets.shape() != self.value(logits).shape() {
            return Err(Error::Shape(format!(
                "soft_cross_entropy: logits {:?} vs targets {:?}",
                self.value(logits).shape(),
                targets.shape()
            )));
        }
        if denom <= 0.0 {
            return Err(Error::InvalidArgument("cross-entropy denominator must be positive".into()));
        }
        let mut softmax = Vec::with_capacity(targets.numel());
        let mut loss = 0.0;
        for (z, t) in self
            .value(logits)
            .data()
            .chunks_exact(c)
            .zip(targets.data().chunks_exact(c))
        {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for (&zv, &tv) in z.iter().zip(t) {
                if tv != 0.0 {
                    loss -= tv * (zv - lse);
                }
                softmax.push((zv - lse).exp());
            }
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / denom),
            Op::SoftCrossEntropy {
                logits,
                targets,
                softmax,
                denom,
            },
            rg,
        ))
    }

    /// Rows `start..end` of a tensor whose first axis is the batch.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(a);
        let shape = v.shape();
        if shape.is_empty() || start >= end || end > shape[0] {
            return Err(Error::Shape(format!("slice_rows {start}..{end} of {shape:?}")));
        }
        let stride: usize = shape[1..].iter().product();
        let mut s = shape.to_vec();
        s[0] = end - start;
        let t = Tensor::new(s, v.data()[start * stride..end * stride].to_vec())?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::SliceRows(a, start), rg))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (n, d) = self.dims2(a, "slice_cols")?;
        if start >= end || end > d {
            return Err(Error::Shape(format!("slice_cols {start}..{end} of width {d}")));
        }
        let data = self
            .value(a)
            .data()
            .chunks_exact(d)
            .flat_map(|r| r[start..end].iter().copied())
            .collect();
        let t = Tensor::new(vec![n, end - start], data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, da) = self.dims2(a, "concat_cols")?;
        let (nb, db) = self.dims2(b, "concat_cols")?;
        if n != nb {
            return Err(Error::Shape(format!("concat_cols rows {n} vs {nb}")));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(n * (da + db));
        for i in 0..n {
            data.extend_from_slice(&va[i * da..(i + 1) * da]);
            data.extend_from_slice(&vb[i * db..(i + 1) * db]);
        }
        let t = Tensor::new(vec![n, da + db], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::ConcatCols(a, b), rg))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Populates gradients of every node reachable from `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        self.check(loss)?;
        if !self.value(loss).is_scalar() {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of node {i}")));
            }
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        // Lazily allocates the gradient slot of an input that needs one.
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[id.0].requires_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| Tensor::zeros(nodes[id.0].value.shape()));
            f(slot.data_mut());
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, gd));
                acc(*b, &mut |s| add_into(s, gd));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, gd));
                acc(*b, &mut |s| s.iter_mut().zip(gd).for_each(|(x, g)| *x -= g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |s| {
                    s.iter_mut().zip(gd).zip(vb).for_each(|((x, g), v)| *x += g * v)
                });
                acc(*b, &mut |s| {
                    s.iter_mut().zip(gd).zip(va).for_each(|((x, g), v)| *x += g * v)
                });
            }
            Op::Affine(a, scale) => {
                acc(*a, &mut |s| s.iter_mut().zip(gd).for_each(|(x, g)| *x += scale * g));
            }
            Op::Relu(a) => {
                let va = nodes[a.0].value.data();
                acc(*a, &mut |s| {
                    s.iter_mut()
                        .zip(gd)
                        .zip(va)
                        .for_each(|((x, g), v)| if *v > 0.0 { *x += g })
                });
            }
            Op::Dropout(a, mask) => {
                acc(*a, &mut |s| {
                    s.iter_mut().zip(gd).zip(mask).for_each(|((x, g), m)| *x += g * m)
                });
            }
            Op::Conv1d { x, w, b, dims } => {
                let (vx, vw) = (nodes[x.0].value.data(), nodes[w.0].value.data());
                acc(*x, &mut |s| kernels::conv1d_backward(*dims, vx, vw, gd, Some(s), None, None));
                acc(*w, &mut |s| kernels::conv1d_backward(*dims, vx, vw, gd, None, Some(s), None));
                acc(*b, &mut |s| kernels::conv1d_backward(*dims, vx, vw, gd, None, None, Some(s)));
            }
            Op::MaxPoolTime(a, arg) => {
                let l = *nodes[a.0].value.shape().last().unwrap();
                acc(*a, &mut |s| {
                    for (r, (&j, &gv)) in arg.iter().zip(gd).enumerate() {
                        s[r * l + j] += gv;
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let (n, din) = dims_of(&nodes[x.0].value);
                let dout = nodes[w.0].value.shape()[0];
                let (vx, vw) = (nodes[x.0].value.data(), nodes[w.0].value.data());
                acc(*x, &mut |s| kernels::matmul_acc(gd, vw, s, n, dout, din));
                acc(*w, &mut |s| kernels::matmul_t_acc(gd, vx, s, n, dout, din));
                acc(*b, &mut |s| {
                    for row in gd.chunks_exact(dout) {
                        add_into(s, row);
                    }
                });
            }
            Op::MatMulT(a, b) => {
                let (n, d) = dims_of(&nodes[a.0].value);
                let m = nodes[b.0].value.shape()[0];
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |s| kernels::matmul_acc(gd, vb, s, n, m, d));
                acc(*b, &mut |s| kernels::matmul_t_acc(gd, va, s, n, m, d));
            }
            Op::L2Normalize(a, norms) => {
                let d = nodes[a.0].value.shape()[1];
                let y = node.value.data();
                acc(*a, &mut |s| {
                    for (r, &n) in norms.iter().enumerate() {
                        let (yr, gr) = (&y[r * d..][..d], &gd[r * d..][..d]);
                        let yg = kernels::dot(yr, gr);
                        for ((x, &yv), &gv) in s[r * d..][..d].iter_mut().zip(yr).zip(gr) {
                            *x += (gv - yv * yg) / n;
                        }
                    }
                });
            }
            Op::RowDot(a, b) => {
                let d = nodes[a.0].value.shape()[1];
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                let scatter = |s: &mut [f64], other: &[f64]| {
                    for (r, &gv) in gd.iter().enumerate() {
                        for (x, &o) in s[r * d..][..d].iter_mut().zip(&other[r * d..][..d]) {
                            *x += gv * o;
                        }
                    }
                };
                acc(*a, &mut |s| scatter(s, vb));
                acc(*b, &mut |s| scatter(s, va));
            }
            Op::Sum(a) => {
                let gv = gd[0];
                acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += gv));
            }
            Op::Mean(a) => {
                let gv = gd[0] / nodes[a.0].value.numel() as f64;
                acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += gv));
            }
            Op::SoftCrossEntropy {
                logits,
                targets,
                softmax,
                denom,
            } => {
                let c = nodes[logits.0].value.shape()[1];
                let scale = gd[0] / denom;
                acc(*logits, &mut |s| {
                    for ((sr, pr), tr) in s
                        .chunks_exact_mut(c)
                        .zip(softmax.chunks_exact(c))
                        .zip(targets.data().chunks_exact(c))
                    {
                        let mass: f64 = tr.iter().sum();
                        for ((x, &p), &t) in sr.iter_mut().zip(pr).zip(tr) {
                            *x += scale * (p * mass - t);
                        }
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let stride: usize = nodes[a.0].value.shape()[1..].iter().product();
                let off = start * stride;
                acc(*a, &mut |s| add_into(&mut s[off..off + gd.len()], gd));
            }
            Op::SliceCols(a, start) => {
                let d = nodes[a.0].value.shape()[1];
                let w = node.value.shape()[1];
                acc(*a, &mut |s| {
                    for (r, gr) in gd.chunks_exact(w).enumerate() {
                        add_into(&mut s[r * d + start..r * d + start + w], gr);
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let da = nodes[a.0].value.shape()[1];
                let db = nodes[b.0].value.shape()[1];
                acc(*a, &mut |s| {
                    for (sr, gr) in s.chunks_exact_mut(da).zip(gd.chunks_exact(da + db)) {
                        add_into(sr, &gr[..da]);
                    }
                });
                acc(*b, &mut |s| {
                    for (sr, gr) in s.chunks_exact_mut(db).zip(gd.chunks_exact(da + db)) {
                        add_into(sr, &gr[da..]);
                    }
                });
            }
            Op::Reshape(a) => acc(*a, &mut |s| add_into(s, gd)),
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dims_of(t: &Tensor) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}
