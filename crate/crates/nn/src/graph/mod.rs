//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] owns every value produced during one forward pass. Nodes are
//! appended in execution order, so the tape is already topologically sorted
//! and [`Graph::backward`] walks it once in reverse.

mod kernels;

use crate::tensor::strides;
use crate::{NnError, Real, Result, Tensor};
use kernels::ConvGeometry;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        eps: T,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Mean {
        x: Var,
        axes: Vec<usize>,
    },
    Sum(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

fn mismatch<T>(op: &'static str, a: &[usize], b: &[usize]) -> Result<T> {
    Err(NnError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    })
}

fn invalid<T>(op: &'static str, message: impl Into<String>) -> Result<T> {
    Err(NnError::InvalidShape {
        op,
        message: message.into(),
    })
}

/// `(outer, size of axis, inner)` for slicing along `axis`.
fn split_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(NnError::NonFinite { op: name });
        }
        let needs_grad = match &op {
            Op::Leaf => false,
            _ => self.parents(&op).iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn parents(&self, op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Gelu(x)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Softmax(x)
            | Op::Reshape(x)
            | Op::Sum(x)
            | Op::Narrow { x, .. }
            | Op::Permute { x, .. }
            | Op::Mean { x, .. } => vec![*x],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Conv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        let v = self.push(value, Op::Leaf, "param")?;
        self.nodes[v.0].needs_grad = true;
        Ok(v)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a trainable leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0].take()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- forward ops ----------------------------------------------------

    /// `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return mismatch("matmul", sa, sb);
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::mm(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::new([m, n], out)?, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return mismatch("add", self.shape(a), self.shape(b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, data)?, Op::Add(a, b), "add")
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return mismatch("mul", self.shape(a), self.shape(b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, data)?, Op::Mul(a, b), "mul")
    }

    /// Adds a `[C]` vector along the last axis of `x`. The only broadcast the
    /// engine supports.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() != 1 || sx[sx.len() - 1] != sb[0] {
            return mismatch("add_bias", sx, sb);
        }
        let c = sb[0];
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % c])
            .collect();
        let shape = sx.to_vec();
        self.push(Tensor::new(shape, data)?, Op::AddBias(x, bias), "add_bias")
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c), "scale")
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| T::of(kernels::gelu(v.f64())));
        self.push(value, Op::Gelu(x), "gelu")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(kernels::sigmoid);
        self.push(value, Op::Sigmoid(x), "sigmoid")
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = shape[shape.len() - 1];
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        self.push(Tensor::new(shape, data)?, Op::Softmax(x), "softmax_rows")
    }

    /// Normalises each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = shape[shape.len() - 1];
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return mismatch("layer_norm", &shape, self.shape(gain));
        }
        let eps = T::of(eps);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c) {
            let (mean, rstd) = row_moments(row, eps);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * rstd * g[j] + b[j];
            }
        }
        self.push(
            Tensor::new(shape, data)?,
            Op::LayerNorm { x, gain, bias, eps },
            "layer_norm",
        )
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat", "no inputs");
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return invalid("concat", format!("axis {axis} out of range for {base:?}"));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let same = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !same {
                return mismatch("concat", &base, s);
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_dims(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * len..(o + 1) * len]);
            }
        }
        self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            "concat",
        )
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return invalid(
                "narrow",
                format!("{start}+{len} along axis {axis} of {shape:?}"),
            );
        }
        let (outer, dim, inner) = split_dims(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Narrow { x, axis, start },
            "narrow",
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push(value, Op::Reshape(x), "reshape")
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return invalid(
                "permute",
                format!("{axes:?} is not a permutation of {shape:?}"),
            );
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let data = permute_data(self.value(x).data(), &shape, axes);
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            "permute",
        )
    }

    /// Matrix transpose of a 2-D tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 2 {
            return invalid(
                "transpose",
                format!("needs 2-D input, got {:?}", self.shape(x)),
            );
        }
        self.permute(x, &[1, 0])
    }

    /// Mean over `axes`, which are removed from the shape. Reducing every
    /// axis yields shape `[1]`.
    pub fn mean(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.is_empty() || axes.iter().any(|&a| a >= shape.len()) {
            return invalid("mean", format!("axes {axes:?} invalid for {shape:?}"));
        }
        let (out_shape, map) = reduce_map(&shape, &axes);
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        let inv = T::one() / T::of(count as f64);
        let mut data = vec![T::zero(); out_shape.iter().product()];
        for (i, &v) in self.value(x).data().iter().enumerate() {
            data[map[i]] = data[map[i]] + v;
        }
        data.iter_mut().for_each(|v| *v = *v * inv);
        self.push(Tensor::new(out_shape, data)?, Op::Mean { x, axes }, "mean")
    }

    /// Sum of every element, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), "sum")
    }

    /// Cross-correlation of `x: [C_in, H, W]` with `w: [C_out, C_in, kh, kw]`,
    /// zero padding on every side.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 4 || sx[0] != sw[1] {
            return mismatch("conv2d", &sx, &sw);
        }
        if let Some(b) = b {
            if self.shape(b) != [sw[0]] {
                return mismatch("conv2d bias", &sw, self.shape(b));
            }
        }
        let Some(geom) = ConvGeometry::new([sx[0], sx[1], sx[2]], [sw[2], sw[3]], stride, padding)
        else {
            return invalid(
                "conv2d",
                format!("kernel {sw:?} stride {stride} does not fit {sx:?}"),
            );
        };
        let c_out = sw[0];
        let cols = kernels::im2col(self.value(x).data(), &geom);
        let p = geom.positions();
        let mut out = kernels::mm(self.value(w).data(), &cols, c_out, geom.patch_len(), p);
        if let Some(b) = b {
            let bias = self.value(b).data();
            for (c, row) in out.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v = *v + bias[c]);
            }
        }
        self.push(
            Tensor::new([c_out, geom.h_out, geom.w_out], out)?,
            Op::Conv2d { x, w, b, geom },
            "conv2d",
        )
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits: [N, K]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return invalid(
                "cross_entropy",
                format!("{} labels for logits {shape:?}", labels.len()),
            );
        }
        let k = shape[1];
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(NnError::LabelOutOfRange {
                label,
                num_classes: k,
            });
        }
        let mut total = T::zero();
        for (row, &label) in self.value(logits).data().chunks(k).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            total = total + lse - row[label];
        }
        let loss = total / T::of(labels.len() as f64);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
            "cross_entropy",
        )
    }

    // ---- backward -------------------------------------------------------

    /// Accumulates `d loss / d leaf` into every trainable leaf. Calling it
    /// again without [`Graph::zero_grad`] adds to the stored gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(NnError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::ones(loss_value.shape().to_vec()));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.grads[i] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
                continue;
            }
            for (parent, pg) in self.vjp(i, &g)? {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for upstream gradient `g`.
    fn vjp(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let gd = g.data();
        let like = |v: Var, data: Vec<T>| Tensor::new(self.shape(v).to_vec(), data);
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if wants(*a) {
                    let da = kernels::mm_bt(gd, self.value(*b).data(), m, n, k);
                    out.push((*a, like(*a, da)?));
                }
                if wants(*b) {
                    let db = kernels::mm_at(self.value(*a).data(), gd, k, m, n);
                    out.push((*b, like(*b, db)?));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                out.push((
                    *a,
                    like(*a, gd.iter().zip(vb).map(|(&x, &y)| x * y).collect())?,
                ));
                out.push((
                    *b,
                    like(*b, gd.iter().zip(va).map(|(&x, &y)| x * y).collect())?,
                ));
            }
            Op::AddBias(x, b) => {
                let c = self.shape(*b)[0];
                let mut db = vec![T::zero(); c];
                for (j, &v) in gd.iter().enumerate() {
                    db[j % c] = db[j % c] + v;
                }
                out.push((*x, g.clone()));
                out.push((*b, like(*b, db)?));
            }
            Op::Scale(x, c) => out.push((*x, g.map(|v| v * *c))),
            Op::Gelu(x) => {
                let vx = self.value(*x).data();
                let d = gd
                    .iter()
                    .zip(vx)
                    .map(|(&gv, &xv)| gv * T::of(kernels::gelu_grad(xv.f64())))
                    .collect();
                out.push((*x, like(*x, d)?));
            }
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                let d = gd
                    .iter()
                    .zip(vx)
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                out.push((*x, like(*x, d)?));
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let d = gd
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                    .collect();
                out.push((*x, like(*x, d)?));
            }
            Op::Softmax(x) => {
                let c = node.value.shape()[node.value.shape().len() - 1];
                let mut d = Vec::with_capacity(gd.len());
                for (grow, yrow) in gd.chunks(c).zip(node.value.data().chunks(c)) {
                    let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    d.extend(grow.iter().zip(yrow).map(|(&gv, &yv)| yv * (gv - dot)));
                }
                out.push((*x, like(*x, d)?));
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let vx = self.value(*x).data();
                let c = self.shape(*gain)[0];
                let gain_v = self.value(*gain).data();
                let mut dx = Vec::with_capacity(vx.len());
                let mut dg = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                let inv_c = T::one() / T::of(c as f64);
                for (xrow, grow) in vx.chunks(c).zip(gd.chunks(c)) {
                    let (mean, rstd) = row_moments(xrow, *eps);
                    let xhat: Vec<T> = xrow.iter().map(|&v| (v - mean) * rstd).collect();
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for j in 0..c {
                        dg[j] = dg[j] + grow[j] * xhat[j];
                        db[j] = db[j] + grow[j];
                        let dh = grow[j] * gain_v[j];
                        sum_d = sum_d + dh;
                        sum_dx = sum_dx + dh * xhat[j];
                    }
                    for j in 0..c {
                        let dh = grow[j] * gain_v[j];
                        dx.push(rstd * (dh - sum_d * inv_c - xhat[j] * sum_dx * inv_c));
                    }
                }
                out.push((*x, like(*x, dx)?));
                out.push((*gain, like(*gain, dg)?));
                out.push((*bias, like(*bias, db)?));
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_dims(node.value.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[*axis];
                    if wants(p) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&gd[base..base + len * inner]);
                        }
                        out.push((p, like(p, d)?));
                    }
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let (outer, dim, inner) = split_dims(self.shape(*x), *axis);
                let len = node.value.shape()[*axis];
                let mut d = vec![T::zero(); outer * dim * inner];
                for o in 0..outer {
                    let base = (o * dim + start) * inner;
                    d[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                out.push((*x, like(*x, d)?));
            }
            Op::Reshape(x) => out.push((*x, like(*x, gd.to_vec())?)),
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let d = permute_data(gd, node.value.shape(), &inverse);
                out.push((*x, like(*x, d)?));
            }
            Op::Mean { x, axes } => {
                let shape = self.shape(*x);
                let (_, map) = reduce_map(shape, axes);
                let count: usize = axes.iter().map(|&a| shape[a]).product();
                let inv = T::one() / T::of(count as f64);
                let d = map.iter().map(|&j| gd[j] * inv).collect();
                out.push((*x, like(*x, d)?));
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                out.push((*x, like(*x, vec![gd[0]; n])?));
            }
            Op::Conv2d { x, w, b, geom } => {
                let c_out = self.shape(*w)[0];
                let p = geom.positions();
                let k = geom.patch_len();
                if wants(*w) {
                    let cols = kernels::im2col(self.value(*x).data(), geom);
                    let dw = kernels::mm_bt(gd, &cols, c_out, p, k);
                    out.push((*w, like(*w, dw)?));
                }
                if wants(*x) {
                    let dcols = kernels::mm_at(self.value(*w).data(), gd, k, c_out, p);
                    out.push((*x, like(*x, kernels::col2im(&dcols, geom))?));
                }
                if let Some(b) = b {
                    let db = gd.chunks(p).map(|row| row.iter().copied().sum()).collect();
                    out.push((*b, like(*b, db)?));
                }
            }
            Op::CrossEntropy { logits, labels } => {
                let k = self.shape(*logits)[1];
                let scale = gd[0] / T::of(labels.len() as f64);
                let mut d = Vec::with_capacity(labels.len() * k);
                for (row, &label) in self.value(*logits).data().chunks(k).zip(labels) {
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
                    let total: T = exps.iter().copied().sum();
                    for (j, e) in exps.into_iter().enumerate() {
                        let onehot = if j == label { T::one() } else { T::zero() };
                        d.push((e / total - onehot) * scale);
                    }
                }
                out.push((*logits, like(*logits, d)?));
            }
        }
        Ok(out)
    }
}

fn row_moments<T: Real>(row: &[T], eps: T) -> (T, T) {
    let n = T::of(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, T::one() / (var + eps).sqrt())
}

fn permute_data<T: Real>(src: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let step: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut idx = vec![0usize; shape.len()];
    let mut out = Vec::with_capacity(src.len());
    let mut offset = 0usize;
    for _ in 0..src.len() {
        out.push(src[offset]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            offset += step[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= step[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

/// Output shape of reducing `axes`, and for each input element the flat index
/// it reduces into.
fn reduce_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let kept: Vec<usize> = (0..shape.len()).filter(|d| !axes.contains(d)).collect();
    let out_shape: Vec<usize> = if kept.is_empty() {
        vec![1]
    } else {
        kept.iter().map(|&d| shape[d]).collect()
    };
    let out_strides = strides(&out_shape);
    let mut contrib = vec![0usize; shape.len()];
    for (k, &d) in kept.iter().enumerate() {
        contrib[d] = out_strides[k];
    }
    let numel: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    let mut map = Vec::with_capacity(numel);
    let mut offset = 0usize;
    for _ in 0..numel {
        map.push(offset);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            offset += contrib[d];
            if idx[d] < shape[d] {
                break;
            }
            offset -= contrib[d] * idx[d];
            idx[d] = 0;
        }
    }
    (out_shape, map)
}

#[cfg(test)]
mod tests;
