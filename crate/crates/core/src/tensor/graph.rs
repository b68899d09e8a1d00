//! Reverse-mode autodiff over an append-only node list.
//!
//! Nodes are appended in creation order, so every node's inputs have smaller
//! indices and the list is already a topological order. Backward walks it in
//! reverse.

use std::sync::Arc;

use super::kernels::{axis_split, bmm_backward, bmm_forward, inverse_perm, permute_data};
use super::{numel, Float, Tensor};
use crate::error::{contract_err, shape_err, Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul { a: Var, b: Var, trans_b: bool },
    Softmax { x: Var, axis: usize },
    RmsNorm { x: Var, gain: Var, inv_rms: Vec<T> },
    Silu(Var),
    Gelu(Var),
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Concat(Vec<Var>),
    Narrow { x: Var, start: usize },
    Rope { x: Var, cos: Arc<[T]>, sin: Arc<[T]> },
    Mean(Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of tensor operations.
///
/// Leaf gradients persist across [`Graph::backward`] calls and accumulate
/// until [`Graph::zero_grad`].
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
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
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf; zeros if none has reached it.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let shape = self.shape(v).to_vec();
        match &self.leaf_grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("grad shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let value = self.value(a).zip_map(self.value(b), f)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn row_len(&self, x: Var, row: Var, what: &str) -> Result<usize> {
        let last = *self.shape(x).last().unwrap_or(&1);
        if self.value(row).len() != last {
            return Err(shape_err!(
                "{what}: row of {:?} does not match last axis of {:?}",
                self.shape(row),
                self.shape(x)
            ));
        }
        Ok(last)
    }

    /// `x + row`, broadcasting `row` over every leading index of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let d = self.row_len(x, row, "add_row")?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(x).clone();
        for chunk in value.data_mut().chunks_mut(d) {
            chunk.iter_mut().zip(&r).for_each(|(v, &b)| *v += b);
        }
        let rg = self.rg(&[x, row]);
        Ok(self.push(value, Op::AddRow(x, row), rg))
    }

    /// `x * row`, broadcasting `row` over every leading index of `x`.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let d = self.row_len(x, row, "mul_row")?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(x).clone();
        for chunk in value.data_mut().chunks_mut(d) {
            chunk.iter_mut().zip(&r).for_each(|(v, &b)| *v *= b);
        }
        let rg = self.rg(&[x, row]);
        Ok(self.push(value, Op::MulRow(x, row), rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let value = self.value(x).map(|v| v * s);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, s), rg)
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Var {
        let value = self.value(x).map(|v| v + s);
        let rg = self.rg(&[x]);
        self.push(value, Op::AddScalar(x), rg)
    }

    /// Batched `a @ b` over `[.., m, k] x [.., k, n]`. Batch extents must be
    /// equal, or one operand must be a plain matrix shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// Batched `a @ b^T` with `b` stored as `[.., n, k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (shape, data) = bmm_forward(va.shape(), va.data(), vb.shape(), vb.data(), trans_b)?;
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, rg))
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(shape_err!("softmax axis {axis} out of range for {:?}", xv.shape()));
        }
        if !xv.all_finite() {
            return Err(Error::Numeric("softmax input contains non-finite values".into()));
        }
        let (outer, n, inner) = axis_split(xv.shape(), axis);
        let mut out = xv.clone();
        let d = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..n {
                    mx = mx.max(d[at(j)]);
                }
                let mut sum = T::zero();
                for j in 0..n {
                    let e = (d[at(j)] - mx).exp();
                    d[at(j)] = e;
                    sum += e;
                }
                for j in 0..n {
                    d[at(j)] = d[at(j)] / sum;
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Softmax { x, axis }, rg))
    }

    /// `gain * x / sqrt(mean(x^2) + eps)` over the last axis.
    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        let d = self.row_len(x, gain, "rms_norm")?;
        let g = self.value(gain).data().to_vec();
        let mut value = self.value(x).clone();
        let eps = T::from_f64(eps);
        let mut inv_rms = Vec::with_capacity(value.len() / d.max(1));
        for row in value.data_mut().chunks_mut(d) {
            let ms = row.iter().map(|&v| v * v).sum::<T>() / T::from_f64(d as f64);
            let inv = T::one() / (ms + eps).sqrt();
            inv_rms.push(inv);
            row.iter_mut().zip(&g).for_each(|(v, &gi)| *v = gi * *v * inv);
        }
        let rg = self.rg(&[x, gain]);
        Ok(self.push(value, Op::RmsNorm { x, gain, inv_rms }, rg))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v / (T::one() + (-v).exp()));
        let rg = self.rg(&[x]);
        self.push(value, Op::Silu(x), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (c, a, half) = (T::from_f64(GELU_C), T::from_f64(GELU_A), T::from_f64(0.5));
        let value = self
            .value(x)
            .map(|v| half * v * (T::one() + (c * (v + a * v * v * v)).tanh()));
        let rg = self.rg(&[x]);
        self.push(value, Op::Gelu(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let value = self.value(x).permute(perm)?;
        let rg = self.rg(&[x]);
        Ok(self.push(
            value,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    /// Concatenate along axis 0.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| contract_err!("concat of zero tensors"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(shape_err!("concat: {:?} does not match trailing extents {:?}", s, tail));
            }
            rows += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![rows];
        shape.extend(&tail);
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Rows `start..start+len` along axis 0.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() || start + len > s[0] {
            return Err(shape_err!("narrow {start}..{} out of range for {:?}", start + len, s));
        }
        let row = numel(&s[1..]);
        let data = self.value(x).data()[start * row..(start + len) * row].to_vec();
        let mut shape = s.clone();
        shape[0] = len;
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Narrow { x, start }, rg))
    }

    /// Rotates adjacent pairs `(2i, 2i+1)` of the last axis of `x`
    /// (`[.., seq, d]`) by per-token angles given as `cos`/`sin` tables of
    /// shape `[seq, d/2]`.
    pub fn rope(&mut self, x: Var, cos: Arc<[T]>, sin: Arc<[T]>) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || !s[s.len() - 1].is_multiple_of(2) {
            return Err(shape_err!("rope needs [.., seq, even d], got {:?}", s));
        }
        let (seq, d) = (s[s.len() - 2], s[s.len() - 1]);
        if cos.len() != seq * d / 2 || sin.len() != cos.len() {
            return Err(shape_err!("rope tables sized {} for [seq {seq}, d {d}]", cos.len()));
        }
        let mut value = self.value(x).clone();
        rope_apply(value.data_mut(), seq, d, &cos, &sin, false);
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Rope { x, cos, sin }, rg))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.data().iter().copied().sum::<T>() / T::from_f64(v.len() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean squared difference against a constant target.
    pub fn mse(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        if self.shape(x) != target.shape() {
            return Err(contract_err!(
                "mse: prediction {:?} vs target {:?}",
                self.shape(x),
                target.shape()
            ));
        }
        let t = self.constant(target.clone());
        let diff = self.sub(x, t)?;
        let sq = self.mul(diff, diff)?;
        Ok(self.mean(sq))
    }

    /// Reverse pass from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(contract_err!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            if let Op::Leaf = op {
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    slot => *slot = Some(g),
                }
                continue;
            }
            self.backward_node(i, op, &g, &mut grads);
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, op: Op<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
            f(slot);
        };
        let out = &nodes[i].value;
        match op {
            Op::Leaf => unreachable!(),
            Op::Add(a, b) => {
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(a, &mut |d| {
                    d.iter_mut().zip(g).zip(vb).for_each(|((x, &y), &w)| *x += y * w)
                });
                acc(b, &mut |d| {
                    d.iter_mut().zip(g).zip(va).for_each(|((x, &y), &w)| *x += y * w)
                });
            }
            Op::AddRow(x, row) => {
                let n = nodes[row.0].value.len();
                acc(x, &mut |d| add_into(d, g));
                acc(row, &mut |d| {
                    for chunk in g.chunks(n) {
                        add_into(d, chunk);
                    }
                });
            }
            Op::MulRow(x, row) => {
                let n = nodes[row.0].value.len();
                let r = nodes[row.0].value.data();
                let xv = nodes[x.0].value.data();
                acc(x, &mut |d| {
                    for (dc, gc) in d.chunks_mut(n).zip(g.chunks(n)) {
                        dc.iter_mut().zip(gc).zip(r).for_each(|((a, &b), &w)| *a += b * w);
                    }
                });
                acc(row, &mut |d| {
                    for (xc, gc) in xv.chunks(n).zip(g.chunks(n)) {
                        d.iter_mut().zip(gc).zip(xc).for_each(|((a, &b), &w)| *a += b * w);
                    }
                });
            }
            Op::Scale(x, s) => acc(x, &mut |d| d.iter_mut().zip(g).for_each(|(a, &b)| *a += b * s)),
            Op::AddScalar(x) => acc(x, &mut |d| add_into(d, g)),
            Op::MatMul { a, b, trans_b } => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let mut da = rg(a).then(|| vec![T::zero(); va.len()]);
                let mut db = rg(b).then(|| vec![T::zero(); vb.len()]);
                bmm_backward(
                    va.shape(),
                    va.data(),
                    vb.shape(),
                    vb.data(),
                    trans_b,
                    g,
                    da.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(da) = da {
                    acc(a, &mut |d| add_into(d, &da));
                }
                if let Some(db) = db {
                    acc(b, &mut |d| add_into(d, &db));
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = axis_split(out.shape(), axis);
                let y = out.data();
                acc(x, &mut |d| {
                    for o in 0..outer {
                        for k in 0..inner {
                            let at = |j: usize| o * n * inner + j * inner + k;
                            let dot: T = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..n {
                                d[at(j)] += y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let gv = nodes[gain.0].value.data();
                let n = gv.len();
                let xv = nodes[x.0].value.data();
                let nf = T::from_f64(n as f64);
                acc(x, &mut |d| {
                    for (r, ((dc, gc), xc)) in d.chunks_mut(n).zip(g.chunks(n)).zip(xv.chunks(n)).enumerate() {
                        let inv = inv_rms[r];
                        // u = dy * gain; dx = inv * (u - xhat * mean(u * xhat))
                        let m: T = gc
                            .iter()
                            .zip(gv)
                            .zip(xc)
                            .map(|((&dy, &gi), &xi)| dy * gi * xi * inv)
                            .sum::<T>()
                            / nf;
                        for j in 0..n {
                            let xhat = xc[j] * inv;
                            dc[j] += inv * (gc[j] * gv[j] - xhat * m);
                        }
                    }
                });
                acc(gain, &mut |d| {
                    for (r, (gc, xc)) in g.chunks(n).zip(xv.chunks(n)).enumerate() {
                        let inv = inv_rms[r];
                        d.iter_mut()
                            .zip(gc)
                            .zip(xc)
                            .for_each(|((a, &dy), &xi)| *a += dy * xi * inv);
                    }
                });
            }
            Op::Silu(x) => {
                let xv = nodes[x.0].value.data();
                acc(x, &mut |d| {
                    for ((a, &dy), &v) in d.iter_mut().zip(g).zip(xv) {
                        let s = T::one() / (T::one() + (-v).exp());
                        *a += dy * s * (T::one() + v * (T::one() - s));
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = nodes[x.0].value.data();
                let (c, k, half) = (T::from_f64(GELU_C), T::from_f64(GELU_A), T::from_f64(0.5));
                let three = T::from_f64(3.0);
                acc(x, &mut |d| {
                    for ((a, &dy), &v) in d.iter_mut().zip(g).zip(xv) {
                        let th = (c * (v + k * v * v * v)).tanh();
                        let dv = half * (T::one() + th)
                            + half * v * (T::one() - th * th) * c * (T::one() + three * k * v * v);
                        *a += dy * dv;
                    }
                });
            }
            Op::Reshape(x) => acc(x, &mut |d| add_into(d, g)),
            Op::Permute { x, perm } => {
                let (_, back) = permute_data(out.shape(), g, &inverse_perm(&perm)).expect("valid perm");
                acc(x, &mut |d| add_into(d, &back));
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = nodes[p.0].value.len();
                    acc(p, &mut |d| add_into(d, &g[off..off + n]));
                    off += n;
                }
            }
            Op::Narrow { x, start } => {
                let row = numel(&out.shape()[1..]);
                acc(x, &mut |d| add_into(&mut d[start * row..start * row + g.len()], g));
            }
            Op::Rope { x, cos, sin } => {
                let s = out.shape();
                let (seq, dd) = (s[s.len() - 2], s[s.len() - 1]);
                let mut back = g.to_vec();
                rope_apply(&mut back, seq, dd, &cos, &sin, true);
                acc(x, &mut |d| add_into(d, &back));
            }
            Op::Mean(x) => {
                let n = T::from_f64(nodes[x.0].value.len() as f64);
                acc(x, &mut |d| d.iter_mut().for_each(|a| *a += g[0] / n));
            }
            Op::Sum(x) => acc(x, &mut |d| d.iter_mut().for_each(|a| *a += g[0])),
        }
    }

    /// True when every node's inputs were created before it.
    pub fn check_topology(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| inputs(&n.op).iter().all(|v| v.0 < i))
    }
}

fn inputs<T>(op: &Op<T>) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::MulRow(a, b) => vec![*a, *b],
        Op::MatMul { a, b, .. } => vec![*a, *b],
        Op::RmsNorm { x, gain, .. } => vec![*x, *gain],
        Op::Scale(x, _)
        | Op::AddScalar(x)
        | Op::Silu(x)
        | Op::Gelu(x)
        | Op::Reshape(x)
        | Op::Mean(x)
        | Op::Sum(x) => vec![*x],
        Op::Softmax { x, .. } | Op::Permute { x, .. } | Op::Narrow { x, .. } | Op::Rope { x, .. } => vec![*x],
        Op::Concat(parts) => parts.clone(),
    }
}

fn add_into<T: Float>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}

fn rope_apply<T: Float>(data: &mut [T], seq: usize, d: usize, cos: &[T], sin: &[T], inverse: bool) {
    let half = d / 2;
    for (r, row) in data.chunks_mut(d).enumerate() {
        let tok = r % seq;
        for p in 0..half {
            let c = cos[tok * half + p];
            let s = if inverse { -sin[tok * half + p] } else { sin[tok * half + p] };
            let (x0, x1) = (row[2 * p], row[2 * p + 1]);
            row[2 * p] = x0 * c - x1 * s;
            row[2 * p + 1] = x0 * s + x1 * c;
        }
    }
}
