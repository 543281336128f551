//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and pushes vector-Jacobian products to the
//! parents that require gradients.

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking a logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Ignore label for per-pixel class targets.
pub const IGNORE_LABEL: u8 = 255;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_extent(&self, input: usize) -> usize {
        (input + 2 * self.pad - self.kernel) / self.stride + 1
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax { x: Var, axis: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Gather { x: Var, index: Vec<usize> },
    SumAll(Var),
    MeanAxis { x: Var, axis: usize },
    Im2Col { x: Var, geom: ConvGeom },
    L1(Var, Var),
    Mse(Var, Var),
    CrossEntropy { logits: Var, targets: Vec<u8>, counted: usize },
    Focal { probs: Var, index: usize, gamma: f64 },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Op-specific cached forward state (softmax probabilities for
    /// cross-entropy).
    aux: Option<Tensor>,
}

/// Records a forward computation for later differentiation.
pub struct Tape {
    nodes: Vec<Node>,
    param_cache: Vec<Option<Var>>,
    track_params: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), param_cache: Vec::new(), track_params: true }
    }

    /// A tape whose parameters enter as constants: nothing on it is
    /// differentiable unless introduced through [`Tape::input`].
    pub fn no_grad() -> Self {
        Self { track_params: false, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push_raw(value, op, requires_grad, None)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool, aux: Option<Tensor>) -> Var {
        self.nodes.push(Node { value, op, requires_grad, aux });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable value (also the stop-gradient entry point).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false, None)
    }

    /// Differentiable leaf whose gradient can be read back after backward.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true, None)
    }

    /// Value of `v` re-entered as a constant.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_cache.len() <= id.index() {
            self.param_cache.resize(id.index() + 1, None);
        }
        if let Some(v) = self.param_cache[id.index()] {
            return v;
        }
        let value = store.value(id).clone();
        let v = self.push_raw(value, Op::Param, self.track_params, None);
        self.param_cache[id.index()] = Some(v);
        v
    }

    // ------------------------------------------------------------------
    // Linear algebra

    /// Batched matrix product `a[.., m, k] · b[.., k, n]`.
    ///
    /// `b` is either rank 2 (shared across the batch) or carries the same
    /// batch extents as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` over the last two axes without materialising the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let dims = MatDims::resolve(&sa, &sb, trans_b)?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; dims.batch * dims.m * dims.n];
        for i in 0..dims.batch {
            let a_off = i * dims.m * dims.k;
            let b_off = if dims.b_batched { i * dims.k * dims.n } else { 0 };
            let (rsb, csb) = if trans_b { (1, dims.k) } else { (dims.n, 1) };
            gemm(
                dims.m,
                dims.k,
                dims.n,
                &av[a_off..],
                (dims.k, 1),
                &bv[b_off..],
                (rsb, csb),
                &mut out[i * dims.m * dims.n..],
                false,
            );
        }
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(dims.n);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    // ------------------------------------------------------------------
    // Elementwise

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// `a + b` where `b`'s shape is a trailing suffix of `a`'s (bias rows,
    /// per-token broadcasts).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let suffix = sa.len() >= sb.len() && sa[sa.len() - sb.len()..] == *sb;
        // A leading unit axis on `b` is accepted as well ([1, D] onto [T, D]).
        let lead_one = sb.len() == sa.len() && sb[0] == 1 && sa[1..] == sb[1..];
        if !suffix && !lead_one {
            return Err(Error::ShapeMismatch { op: "add_broadcast", lhs: sa.to_vec(), rhs: sb.to_vec() });
        }
        let bv = self.value(b).data();
        let inner = bv.len();
        let mut out = self.value(a).clone();
        for chunk in out.data_mut().chunks_mut(inner) {
            for (o, x) in chunk.iter_mut().zip(bv) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::AddBroadcast(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor), &[a])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(gelu);
        self.push(value, Op::Gelu(a), &[a])
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch { op, lhs: ta.shape().to_vec(), rhs: tb.shape().to_vec() });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    // ------------------------------------------------------------------
    // Structural

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis, "softmax")?;
        let mut out = self.value(x).clone();
        let data = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| data[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (data[at(j)] - max).exp();
                    data[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    data[at(j)] /= total;
                }
            }
        }
        Ok(self.push(out, Op::Softmax { x, axis }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!("permutation {perm:?} for rank {}", shape.len())));
        }
        let value = permute_tensor(self.value(x), perm);
        Ok(self.push(value, Op::Permute { x, perm: perm.to_vec() }, &[x]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::InvalidArgument(format!("concat axis {axis} for rank {}", first.len())));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch { op: "concat", lhs: first.clone(), rhs: s.to_vec() });
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec(), axis }, parts))
    }

    /// Selects slabs of the leading axis (repeats and reorderings allowed).
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if index.is_empty() || index.iter().any(|&i| i >= shape[0]) {
            return Err(Error::InvalidArgument(format!("gather index out of range for extent {}", shape[0])));
        }
        let inner: usize = shape[1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(index.len() * inner);
        for &i in index {
            data.extend_from_slice(&src[i * inner..(i + 1) * inner]);
        }
        let mut out_shape = shape;
        out_shape[0] = index.len();
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Gather { x, index: index.to_vec() }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::SumAll(x), &[x])
    }

    /// Mean over one axis; the axis is removed (rank-1 inputs give `[1]`).
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis, "mean_axis")?;
        let src = self.value(x).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += src[(o * len + j) * inner + i];
                }
            }
        }
        data.iter_mut().for_each(|v| *v /= len as f64);
        let mut out_shape = shape;
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::MeanAxis { x, axis }, &[x]))
    }

    /// Unfolds `[M, H, W, C]` into convolution patches
    /// `[M·Ho·Wo, k·k·C]` ordered (ky, kx, c), zero padded.
    pub fn im2col(&mut self, x: Var, geom: ConvGeom) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 || geom.kernel == 0 || geom.stride == 0 {
            return Err(Error::InvalidArgument(format!("im2col expects [M,H,W,C], got {shape:?}")));
        }
        let (m, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        if h + 2 * geom.pad < geom.kernel || w + 2 * geom.pad < geom.kernel {
            return Err(Error::InvalidShape { shape, reason: "image smaller than kernel" });
        }
        let (ho, wo) = (geom.out_extent(h), geom.out_extent(w));
        let cols = geom.kernel * geom.kernel * c;
        let src = self.value(x).data();
        let mut data = vec![0.0; m * ho * wo * cols];
        for_each_patch(m, h, w, c, geom, |row, col, src_off| {
            data[row * cols + col..row * cols + col + c].copy_from_slice(&src[src_off..src_off + c]);
        });
        let value = Tensor::new([m * ho * wo, cols], data)?;
        Ok(self.push(value, Op::Im2Col { x, geom }, &[x]))
    }

    // ------------------------------------------------------------------
    // Losses (all return shape [1])

    /// Mean absolute error.
    pub fn l1(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.zip_same("l1", pred, target, |x, y| (x - y).abs())?;
        let value = Tensor::scalar(d.sum() / d.numel() as f64);
        Ok(self.push(value, Op::L1(pred, target), &[pred, target]))
    }

    /// Mean squared error.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.zip_same("mse", pred, target, |x, y| (x - y) * (x - y))?;
        let value = Tensor::scalar(d.sum() / d.numel() as f64);
        Ok(self.push(value, Op::Mse(pred, target), &[pred, target]))
    }

    /// Mean `-log p_true` over rows of `logits[N, C]`, skipping rows whose
    /// target is [`IGNORE_LABEL`]. Returns 0 when every row is ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u8]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(Error::ShapeMismatch { op: "cross_entropy", lhs: shape, rhs: vec![targets.len()] });
        }
        let classes = shape[1];
        if let Some(&bad) = targets.iter().find(|&&t| t != IGNORE_LABEL && t as usize >= classes) {
            return Err(Error::InvalidArgument(format!("class id {bad} >= {classes} classes")));
        }
        let mut probs = self.value(logits).clone();
        let mut total = 0.0;
        let mut counted = 0;
        for (row, &t) in probs.data_mut().chunks_mut(classes).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for v in row.iter_mut() {
                *v = (*v - max).exp() / z;
            }
            if t != IGNORE_LABEL {
                total -= row[t as usize].max(LOG_EPS).ln();
                counted += 1;
            }
        }
        let loss = if counted > 0 { total / counted as f64 } else { 0.0 };
        let rg = self.nodes[logits.0].requires_grad;
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), counted };
        Ok(self.push_raw(Tensor::scalar(loss), op, rg, Some(probs)))
    }

    /// Focal loss `-(1 - p_j)^gamma · ln p_j` on probabilities, with `p_j`
    /// clamped to [`LOG_EPS`].
    pub fn focal(&mut self, probs: Var, index: usize, gamma: f64) -> Result<Var> {
        let p = self.value(probs).data();
        if index >= p.len() {
            return Err(Error::InvalidArgument(format!("focal index {index} >= {}", p.len())));
        }
        let pj = p[index].max(LOG_EPS);
        let value = Tensor::scalar(-(1.0 - pj).powf(gamma) * pj.ln());
        Ok(self.push(value, Op::Focal { probs, index, gamma }, &[probs]))
    }

    /// `Σ wᵢ·xᵢ` over one-element tensors.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            let t = self.value(v);
            if t.numel() != 1 {
                return Err(Error::NotScalar(t.shape().to_vec()));
            }
            total += w * t.item();
        }
        let parents: Vec<Var> = terms.iter().map(|t| t.0).collect();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), &parents))
    }

    // ------------------------------------------------------------------
    // Reverse pass

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(Error::NotScalar(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::ones(loss_value.shape().to_vec()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { nodes: grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn accumulate_with(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v).to_vec()));
        }
        f(slot.as_mut().unwrap().data_mut());
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul { a, b, trans_b } => self.matmul_backward(a, b, trans_b, g, grads)?,
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.map(|x| -x));
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                self.accumulate_with(grads, a, |d| {
                    for ((d, gi), y) in d.iter_mut().zip(g.data()).zip(vb) {
                        *d += gi * y;
                    }
                });
                self.accumulate_with(grads, b, |d| {
                    for ((d, gi), x) in d.iter_mut().zip(g.data()).zip(va) {
                        *d += gi * x;
                    }
                });
            }
            &Op::AddBroadcast(a, b) => {
                self.accumulate(grads, a, g.clone());
                let inner = self.value(b).numel();
                self.accumulate_with(grads, b, |d| {
                    for chunk in g.data().chunks(inner) {
                        for (d, x) in d.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                });
            }
            &Op::Scale(a, factor) => self.accumulate(grads, a, g.map(|x| x * factor)),
            &Op::Gelu(a) => {
                let x = self.value(a).data();
                self.accumulate_with(grads, a, |d| {
                    for ((d, gi), &xi) in d.iter_mut().zip(g.data()).zip(x) {
                        *d += gi * gelu_grad(xi);
                    }
                });
            }
            &Op::Softmax { x, axis } => {
                let y = &node.value;
                let (outer, len, inner) = split_axis(y.shape(), axis, "softmax")?;
                let (yd, gd) = (y.data(), g.data());
                self.accumulate_with(grads, x, |d| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * len * inner + j * inner + i;
                            let dot: f64 = (0..len).map(|j| yd[at(j)] * gd[at(j)]).sum();
                            for j in 0..len {
                                d[at(j)] += yd[at(j)] * (gd[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            &Op::Reshape(x) => {
                let g = g.clone().reshape(self.shape(x).to_vec())?;
                self.accumulate(grads, x, g);
            }
            Op::Permute { x, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                self.accumulate(grads, *x, permute_tensor(g, &inverse));
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut start = 0;
                for &p in parts {
                    let len = self.shape(p)[*axis] * inner;
                    self.accumulate_with(grads, p, |d| {
                        for o in 0..outer {
                            let src = &g.data()[o * row + start..o * row + start + len];
                            for (d, s) in d[o * len..(o + 1) * len].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    });
                    start += len;
                }
            }
            Op::Gather { x, index } => {
                let inner = g.numel() / index.len();
                self.accumulate_with(grads, *x, |d| {
                    for (k, &i) in index.iter().enumerate() {
                        for (d, s) in d[i * inner..(i + 1) * inner].iter_mut().zip(&g.data()[k * inner..]) {
                            *d += s;
                        }
                    }
                });
            }
            &Op::SumAll(x) => {
                let gv = g.item();
                self.accumulate_with(grads, x, |d| d.iter_mut().for_each(|v| *v += gv));
            }
            &Op::MeanAxis { x, axis } => {
                let shape = self.shape(x).to_vec();
                let (outer, len, inner) = split_axis(&shape, axis, "mean_axis")?;
                let gd = g.data();
                self.accumulate_with(grads, x, |d| {
                    for o in 0..outer {
                        for j in 0..len {
                            for i in 0..inner {
                                d[(o * len + j) * inner + i] += gd[o * inner + i] / len as f64;
                            }
                        }
                    }
                });
            }
            &Op::Im2Col { x, geom } => {
                let shape = self.shape(x).to_vec();
                let (m, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
                let cols = geom.kernel * geom.kernel * c;
                let gd = g.data();
                self.accumulate_with(grads, x, |d| {
                    for_each_patch(m, h, w, c, geom, |row, col, src_off| {
                        for ch in 0..c {
                            d[src_off + ch] += gd[row * cols + col + ch];
                        }
                    });
                });
            }
            &Op::L1(p, t) => {
                let n = node_numel(self, p) as f64;
                let gv = g.item() / n;
                let diff: Vec<f64> = self.value(p).data().iter().zip(self.value(t).data()).map(|(a, b)| a - b).collect();
                let sign = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
                self.accumulate_with(grads, p, |d| {
                    for (d, &df) in d.iter_mut().zip(&diff) {
                        *d += gv * sign(df);
                    }
                });
                self.accumulate_with(grads, t, |d| {
                    for (d, &df) in d.iter_mut().zip(&diff) {
                        *d -= gv * sign(df);
                    }
                });
            }
            &Op::Mse(p, t) => {
                let n = node_numel(self, p) as f64;
                let gv = 2.0 * g.item() / n;
                let diff: Vec<f64> = self.value(p).data().iter().zip(self.value(t).data()).map(|(a, b)| a - b).collect();
                self.accumulate_with(grads, p, |d| {
                    for (d, &df) in d.iter_mut().zip(&diff) {
                        *d += gv * df;
                    }
                });
                self.accumulate_with(grads, t, |d| {
                    for (d, &df) in d.iter_mut().zip(&diff) {
                        *d -= gv * df;
                    }
                });
            }
            Op::CrossEntropy { logits, targets, counted } => {
                if *counted == 0 {
                    return Ok(());
                }
                let probs = node.aux.as_ref().expect("cross-entropy caches probabilities");
                let classes = probs.shape()[1];
                let gv = g.item() / *counted as f64;
                self.accumulate_with(grads, *logits, |d| {
                    for (r, &t) in targets.iter().enumerate() {
                        if t == IGNORE_LABEL {
                            continue;
                        }
                        let row = &probs.data()[r * classes..(r + 1) * classes];
                        for (c, &p) in row.iter().enumerate() {
                            let onehot = if c == t as usize { 1.0 } else { 0.0 };
                            d[r * classes + c] += gv * (p - onehot);
                        }
                    }
                });
            }
            &Op::Focal { probs, index, gamma } => {
                let p = self.value(probs).data()[index];
                if p < LOG_EPS {
                    return Ok(());
                }
                let q = 1.0 - p;
                let dl = gamma * q.powf(gamma - 1.0) * p.ln() - q.powf(gamma) / p;
                let gv = g.item();
                self.accumulate_with(grads, probs, |d| d[index] += gv * dl);
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    self.accumulate(grads, v, Tensor::scalar(w * g.item()));
                }
            }
        }
        Ok(())
    }

    fn matmul_backward(&self, a: Var, b: Var, trans_b: bool, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let dims = MatDims::resolve(self.shape(a), self.shape(b), trans_b)?;
        let (av, bv, gd) = (self.value(a).data(), self.value(b).data(), g.data());
        let (m, k, n) = (dims.m, dims.k, dims.n);
        // dA[m,k] = dC[m,n] · B_effᵀ
        self.accumulate_with(grads, a, |d| {
            for i in 0..dims.batch {
                let b_off = if dims.b_batched { i * k * n } else { 0 };
                // B_eff[k][n]; B_effᵀ[n][k] strides.
                let bt = if trans_b { (k, 1) } else { (1, n) };
                gemm(m, n, k, &gd[i * m * n..], (n, 1), &bv[b_off..], bt, &mut d[i * m * k..], true);
            }
        });
        // dB_eff[k,n] = Aᵀ · dC, summed over the batch when b is shared.
        self.accumulate_with(grads, b, |d| {
            for i in 0..dims.batch {
                let b_off = if dims.b_batched { i * k * n } else { 0 };
                let a_sl = &av[i * m * k..];
                let g_sl = &gd[i * m * n..];
                if trans_b {
                    // stored B is [n, k]: dB = dCᵀ · A
                    gemm(n, m, k, g_sl, (1, n), a_sl, (k, 1), &mut d[b_off..], true);
                } else {
                    gemm(k, m, n, a_sl, (1, k), g_sl, (n, 1), &mut d[b_off..], true);
                }
            }
        });
        Ok(())
    }
}

fn node_numel(tape: &Tape, v: Var) -> usize {
    tape.value(v).numel()
}

/// Gradients of one backward pass, indexed by tape node.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    /// Extracts parameter gradients aligned with `store`; parameters that
    /// never entered the tape or were unreachable from the loss get `None`.
    pub fn param_grads(&self, tape: &Tape, store: &ParamStore) -> ParamGrads {
        let mut out = vec![None; store.len()];
        for (id, slot) in out.iter_mut().enumerate() {
            if let Some(Some(v)) = tape.param_cache.get(id) {
                *slot = self.get(*v).cloned();
            }
        }
        ParamGrads(out)
    }
}

struct MatDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    b_batched: bool,
}

impl MatDims {
    fn resolve(sa: &[usize], sb: &[usize], trans_b: bool) -> Result<Self> {
        let err = || Error::ShapeMismatch { op: "matmul", lhs: sa.to_vec(), rhs: sb.to_vec() };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        if k != kb {
            return Err(err());
        }
        let batch_a = &sa[..sa.len() - 2];
        let batch_b = &sb[..sb.len() - 2];
        let b_batched = !batch_b.is_empty();
        if b_batched && batch_a != batch_b {
            return Err(err());
        }
        Ok(Self { batch: batch_a.iter().product(), m, k, n, b_batched })
    }
}

/// `c[m,n] (+)= a[m,k] · b[k,n]` with arbitrary element strides for a, b.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    let a_end = (m - 1) * rsa + (k - 1) * csa;
    let b_end = (k - 1) * rsb + (n - 1) * csb;
    assert!(a.len() > a_end && b.len() > b_end && c.len() >= m * n, "gemm operand out of bounds");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the assert above bounds every strided access of a, b and c.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn split_axis(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::ShapeMismatch { op, lhs: shape.to_vec(), rhs: vec![axis] });
    }
    Ok((shape[..axis].iter().product(), shape[axis], shape[axis + 1..].iter().product()))
}

fn permute_tensor(t: &Tensor, perm: &[usize]) -> Tensor {
    let shape = t.shape();
    let rank = shape.len();
    let mut strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let src = t.data();
    let mut data = Vec::with_capacity(src.len());
    let mut counter = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..src.len() {
        data.push(src[off]);
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            off += src_strides[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            off -= src_strides[ax] * out_shape[ax];
            counter[ax] = 0;
        }
    }
    Tensor::new(out_shape, data).expect("permutation preserves element count")
}

/// Calls `f(row, col, src_offset)` for every in-bounds (patch, tap) pair.
fn for_each_patch(m: usize, h: usize, w: usize, c: usize, geom: ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
    let (ho, wo) = (geom.out_extent(h), geom.out_extent(w));
    for view in 0..m {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = (view * ho + oy) * wo + ox;
                for ky in 0..geom.kernel {
                    let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..geom.kernel {
                        let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let col = (ky * geom.kernel + kx) * c;
                        let src = ((view * h + iy as usize) * w + ix as usize) * c;
                        f(row, col, src);
                    }
                }
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
