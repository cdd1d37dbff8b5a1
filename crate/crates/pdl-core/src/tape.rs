//! Reverse-mode differentiation over a linear op record.
//!
//! Operations are recorded in construction order on a [`Tape`]; every input
//! of an op precedes it, so [`Tape::backward`] is a single reverse sweep.
//! The op set is exactly what the embedding backbone and the losses need —
//! no broadcasting beyond bias rows, no higher-order derivatives.
//!
//! The tape is single-threaded and consumed by `backward`; one record per
//! training step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// A[m,k] @ B[k,n]
    MatMul { a: Var, b: Var },
    /// A[m,k] @ B[n,k]^T
    MatMulNt { a: Var, b: Var },
    /// X[m,k] @ W[k,n] + b[n] broadcast over rows
    Affine { x: Var, w: Var, b: Var },
    Relu { x: Var },
    /// Rows divided by max(row norm, eps)
    L2NormalizeRows { x: Var, eps: f64 },
    Mean { v: Var },
    /// Population variance (divide by n)
    Variance { v: Var },
    Sum { v: Var },
    /// ln(max(x, floor)), slope 1/max(x, floor) even when clamped
    LnClamped { x: Var, floor: f64 },
    /// Per-row log(sum(exp(x))), max-shifted
    RowLogSumExp { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Div { a: Var, b: Var },
    AddScalar { x: Var },
    MulScalar { x: Var, c: f64 },
    Abs { x: Var },
    Sqrt { x: Var },
    /// out[t] = x.data[indices[t]]; backward scatter-adds
    Gather { x: Var, indices: Vec<usize> },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Gradient buffers produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    entries: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if one was produced.
    ///
    /// Every `requires_grad` leaf has an entry (zeros when disconnected from
    /// the loss).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.entries.get(v.0).and_then(|e| e.as_ref())
    }

    /// Removes and returns the gradient for `v`.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.entries.get_mut(v.0).and_then(|e| e.take())
    }
}

/// The active computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Registers an input tensor. Parameters pass `requires_grad = true`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn require_rank2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                lhs: t.shape().to_vec(),
                rhs: vec![0, 0],
            });
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    // ── Forward ops ─────────────────────────────────────────────────────

    /// Matrix product `A[m,k] @ B[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.require_rank2("matmul", a)?;
        let (k2, n) = self.require_rank2("matmul", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        mm_nn(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(Op::MatMul { a, b }, Tensor::matrix(m, n, out)?, rg))
    }

    /// Matrix product against a transposed right operand: `A[m,k] @ B[n,k]^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.require_rank2("matmul_nt", a)?;
        let (n, k2) = self.require_rank2("matmul_nt", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        mm_nt(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(Op::MatMulNt { a, b }, Tensor::matrix(m, n, out)?, rg))
    }

    /// `X @ W + b` with the bias broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, k) = self.require_rank2("affine", x)?;
        let (k2, n) = self.require_rank2("affine", w)?;
        let bias = self.value(b);
        if k != k2 || bias.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: "affine",
                lhs: self.value(x).shape().to_vec(),
                rhs: if k != k2 {
                    self.value(w).shape().to_vec()
                } else {
                    bias.shape().to_vec()
                },
            });
        }
        let mut out = vec![0.0; m * n];
        mm_nn(self.value(x).data(), self.value(w).data(), m, k, n, &mut out);
        let bias = self.value(b).data();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += bias[j];
            }
        }
        let rg = self.needs_grad(&[x, w, b]);
        Ok(self.push(Op::Affine { x, w, b }, Tensor::matrix(m, n, out)?, rg))
    }

    /// Elementwise `max(0, x)`; subgradient 0 at x = 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.needs_grad(&[x]);
        self.push(Op::Relu { x }, Tensor::new(shape, data).unwrap(), rg)
    }

    /// Divides each row of `X[m,d]` by `max(row norm, eps)`.
    pub fn l2_normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        debug_assert!(eps > 0.0);
        let (m, d) = self.require_rank2("l2_normalize_rows", x)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; m * d];
        for i in 0..m {
            let row = &src[i * d..(i + 1) * d];
            let denom = row_norm(row).max(eps);
            for j in 0..d {
                out[i * d + j] = row[j] / denom;
            }
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(
            Op::L2NormalizeRows { x, eps },
            Tensor::matrix(m, d, out)?,
            rg,
        ))
    }

    /// Arithmetic mean over all elements; scalar output. The reduction is
    /// correctly rounded, so it is invariant to element order.
    pub fn mean(&mut self, v: Var) -> Result<Var> {
        let t = self.value(v);
        if t.is_empty() {
            return Err(Error::EmptySet { what: "mean" });
        }
        let m = crate::sums::exact_mean(t.data());
        let rg = self.needs_grad(&[v]);
        Ok(self.push(Op::Mean { v }, Tensor::scalar(m), rg))
    }

    /// Population variance over all elements; scalar output. Correctly
    /// rounded like [`Tape::mean`].
    pub fn variance(&mut self, v: Var) -> Result<Var> {
        let t = self.value(v);
        if t.is_empty() {
            return Err(Error::EmptySet { what: "variance" });
        }
        let var = crate::sums::exact_population_variance(t.data());
        let rg = self.needs_grad(&[v]);
        Ok(self.push(Op::Variance { v }, Tensor::scalar(var), rg))
    }

    /// Sum over all elements; scalar output. Correctly rounded.
    pub fn sum(&mut self, v: Var) -> Result<Var> {
        let t = self.value(v);
        if t.is_empty() {
            return Err(Error::EmptySet { what: "sum" });
        }
        let s = crate::sums::exact_sum(t.data().iter().copied());
        let rg = self.needs_grad(&[v]);
        Ok(self.push(Op::Sum { v }, Tensor::scalar(s), rg))
    }

    /// Elementwise `ln(max(x, floor))` with a straight-through slope
    /// `1/max(x, floor)` so optimization can leave the clamped region.
    pub fn ln_clamped(&mut self, x: Var, floor: f64) -> Var {
        debug_assert!(floor > 0.0);
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| fmath::ln(v.max(floor)))
            .collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.needs_grad(&[x]);
        self.push(
            Op::LnClamped { x, floor },
            Tensor::new(shape, data).unwrap(),
            rg,
        )
    }

    /// Per-row `ln Σ_j exp(x[i][j])` of `X[m,n]`, computed max-shifted.
    pub fn row_log_sum_exp(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.require_rank2("row_log_sum_exp", x)?;
        if n == 0 {
            return Err(Error::EmptySet {
                what: "row_log_sum_exp",
            });
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|&v| fmath::exp(v - hi)).sum();
            out[i] = hi + fmath::ln(s);
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(Op::RowLogSumExp { x }, Tensor::vector(out), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, |a, b| Op::Div { a, b })
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: fn(f64, f64) -> f64,
        op: fn(Var, Var) -> Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape().to_vec();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(op(a, b), Tensor::new(shape, data).unwrap(), rg))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let data = self.value(x).data().iter().map(|&v| v + c).collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.needs_grad(&[x]);
        self.push(Op::AddScalar { x }, Tensor::new(shape, data).unwrap(), rg)
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        let data = self.value(x).data().iter().map(|&v| v * c).collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.needs_grad(&[x]);
        self.push(Op::MulScalar { x, c }, Tensor::new(shape, data).unwrap(), rg)
    }

    /// Elementwise absolute value; subgradient 0 at x = 0.
    pub fn abs(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| fmath::abs(v)).collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.needs_grad(&[x]);
        self.push(Op::Abs { x }, Tensor::new(shape, data).unwrap(), rg)
    }

    /// Elementwise square root; differentiable for x > 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| fmath::sqrt(v))
            .collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.needs_grad(&[x]);
        self.push(Op::Sqrt { x }, Tensor::new(shape, data).unwrap(), rg)
    }

    /// `out[t] = x.data[indices[t]]` reshaped to `out_shape`; the backward
    /// pass scatter-adds, so repeated indices accumulate.
    pub fn gather(&mut self, x: Var, indices: Vec<usize>, out_shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x);
        let expected: usize = out_shape.iter().product();
        if expected != indices.len() {
            return Err(Error::ShapeMismatch {
                op: "gather",
                lhs: out_shape,
                rhs: vec![indices.len()],
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.len()) {
            return Err(Error::Config(alloc::format!(
                "gather index {bad} out of bounds for tensor of {} elements",
                t.len()
            )));
        }
        let data: Vec<f64> = indices.iter().map(|&i| t.data()[i]).collect();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(
            Op::Gather { x, indices },
            Tensor::new(out_shape, data)?,
            rg,
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Consumes the record.
    ///
    /// Every `requires_grad` leaf gets a gradient buffer; leaves the loss
    /// does not depend on get zeros.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let loss_val = &self.nodes[loss.0].value;
        if !loss_val.is_scalar() {
            return Err(Error::NonScalarLoss {
                len: loss_val.len(),
            });
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_inputs(id, &g, &mut grads);
            // Non-leaf intermediates are not reported; put leaf grads back.
            if matches!(self.nodes[id].op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }

        let mut entries: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let entry = match grads[id].take() {
                Some(buf) => Some(Tensor::new(node.value.shape().to_vec(), buf).unwrap()),
                None if matches!(node.op, Op::Leaf) && node.requires_grad => {
                    Some(Tensor::zeros(node.value.shape().to_vec()))
                }
                None => None,
            };
            entries.push(entry);
        }
        Ok(Gradients { entries })
    }

    fn accumulate_inputs(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        let len = |v: Var| self.nodes[v.0].value.len();

        match &self.nodes[id].op {
            Op::Leaf => {}

            Op::MatMul { a, b } => {
                let (m, k) = dims2(&self.nodes[a.0].value);
                let n = self.nodes[id].value.cols();
                if rg(*a) {
                    let slot = slot(grads, a.0, len(*a));
                    mm_nt(g, val(*b), m, n, k, slot); // dA = G @ B^T
                }
                if rg(*b) {
                    let slot = slot(grads, b.0, len(*b));
                    mm_tn(val(*a), g, m, k, n, slot); // dB = A^T @ G
                }
            }

            Op::MatMulNt { a, b } => {
                let (m, k) = dims2(&self.nodes[a.0].value);
                let n = self.nodes[id].value.cols();
                if rg(*a) {
                    let slot = slot(grads, a.0, len(*a));
                    mm_nn(g, val(*b), m, n, k, slot); // dA = G @ B
                }
                if rg(*b) {
                    let slot = slot(grads, b.0, len(*b));
                    mm_tn(g, val(*a), m, n, k, slot); // dB = G^T @ A
                }
            }

            Op::Affine { x, w, b } => {
                let (m, k) = dims2(&self.nodes[x.0].value);
                let n = self.nodes[id].value.cols();
                if rg(*x) {
                    let slot = slot(grads, x.0, len(*x));
                    mm_nt(g, val(*w), m, n, k, slot); // dX = G @ W^T
                }
                if rg(*w) {
                    let slot = slot(grads, w.0, len(*w));
                    mm_tn(val(*x), g, m, k, n, slot); // dW = X^T @ G
                }
                if rg(*b) {
                    let slot = slot(grads, b.0, n);
                    for i in 0..m {
                        for j in 0..n {
                            slot[j] += g[i * n + j];
                        }
                    }
                }
            }

            Op::Relu { x } => {
                if rg(*x) {
                    let src = val(*x);
                    let slot = slot(grads, x.0, len(*x));
                    for (i, &v) in src.iter().enumerate() {
                        if v > 0.0 {
                            slot[i] += g[i];
                        }
                    }
                }
            }

            Op::L2NormalizeRows { x, eps } => {
                if rg(*x) {
                    let (m, d) = dims2(&self.nodes[x.0].value);
                    let src = val(*x);
                    let slot = slot(grads, x.0, m * d);
                    for i in 0..m {
                        let row = &src[i * d..(i + 1) * d];
                        let grow = &g[i * d..(i + 1) * d];
                        let norm = row_norm(row);
                        if norm >= *eps {
                            let dot: f64 =
                                row.iter().zip(grow).map(|(&x, &gx)| x * gx).sum();
                            let n3 = norm * norm * norm;
                            for j in 0..d {
                                slot[i * d + j] += grow[j] / norm - row[j] * dot / n3;
                            }
                        } else {
                            for j in 0..d {
                                slot[i * d + j] += grow[j] / eps;
                            }
                        }
                    }
                }
            }

            Op::Mean { v } => {
                if rg(*v) {
                    let n = len(*v) as f64;
                    let slot = slot(grads, v.0, len(*v));
                    for s in slot.iter_mut() {
                        *s += g[0] / n;
                    }
                }
            }

            Op::Variance { v } => {
                if rg(*v) {
                    let n = len(*v) as f64;
                    let src = val(*v);
                    let mu = crate::sums::exact_mean(src);
                    let slot = slot(grads, v.0, len(*v));
                    for (s, &x) in slot.iter_mut().zip(src) {
                        *s += g[0] * 2.0 * (x - mu) / n;
                    }
                }
            }

            Op::Sum { v } => {
                if rg(*v) {
                    let slot = slot(grads, v.0, len(*v));
                    for s in slot.iter_mut() {
                        *s += g[0];
                    }
                }
            }

            Op::LnClamped { x, floor } => {
                if rg(*x) {
                    let src = val(*x);
                    let slot = slot(grads, x.0, len(*x));
                    for (i, &v) in src.iter().enumerate() {
                        slot[i] += g[i] / v.max(*floor);
                    }
                }
            }

            Op::RowLogSumExp { x } => {
                if rg(*x) {
                    let (m, n) = dims2(&self.nodes[x.0].value);
                    let src = val(*x);
                    let lse = self.nodes[id].value.data();
                    let slot = slot(grads, x.0, m * n);
                    for i in 0..m {
                        for j in 0..n {
                            slot[i * n + j] += g[i] * fmath::exp(src[i * n + j] - lse[i]);
                        }
                    }
                }
            }

            Op::Add { a, b } => {
                for v in [a, b] {
                    if rg(*v) {
                        let slot = slot(grads, v.0, len(*v));
                        for (s, &gi) in slot.iter_mut().zip(g) {
                            *s += gi;
                        }
                    }
                }
            }

            Op::Sub { a, b } => {
                if rg(*a) {
                    let slot = slot(grads, a.0, len(*a));
                    for (s, &gi) in slot.iter_mut().zip(g) {
                        *s += gi;
                    }
                }
                if rg(*b) {
                    let slot = slot(grads, b.0, len(*b));
                    for (s, &gi) in slot.iter_mut().zip(g) {
                        *s -= gi;
                    }
                }
            }

            Op::Mul { a, b } => {
                if rg(*a) {
                    let other = val(*b);
                    let slot = slot(grads, a.0, len(*a));
                    for i in 0..g.len() {
                        slot[i] += g[i] * other[i];
                    }
                }
                if rg(*b) {
                    let other = val(*a);
                    let slot = slot(grads, b.0, len(*b));
                    for i in 0..g.len() {
                        slot[i] += g[i] * other[i];
                    }
                }
            }

            Op::Div { a, b } => {
                let out = self.nodes[id].value.data();
                if rg(*a) {
                    let denom = val(*b);
                    let slot = slot(grads, a.0, len(*a));
                    for i in 0..g.len() {
                        slot[i] += g[i] / denom[i];
                    }
                }
                if rg(*b) {
                    let denom = val(*b);
                    let slot = slot(grads, b.0, len(*b));
                    for i in 0..g.len() {
                        slot[i] -= g[i] * out[i] / denom[i];
                    }
                }
            }

            Op::AddScalar { x } => {
                if rg(*x) {
                    let slot = slot(grads, x.0, len(*x));
                    for (s, &gi) in slot.iter_mut().zip(g) {
                        *s += gi;
                    }
                }
            }

            Op::MulScalar { x, c } => {
                if rg(*x) {
                    let slot = slot(grads, x.0, len(*x));
                    for (s, &gi) in slot.iter_mut().zip(g) {
                        *s += gi * c;
                    }
                }
            }

            Op::Abs { x } => {
                if rg(*x) {
                    let src = val(*x);
                    let slot = slot(grads, x.0, len(*x));
                    for i in 0..g.len() {
                        if src[i] > 0.0 {
                            slot[i] += g[i];
                        } else if src[i] < 0.0 {
                            slot[i] -= g[i];
                        }
                    }
                }
            }

            Op::Sqrt { x } => {
                if rg(*x) {
                    let out = self.nodes[id].value.data();
                    let slot = slot(grads, x.0, len(*x));
                    for i in 0..g.len() {
                        slot[i] += g[i] * 0.5 / out[i];
                    }
                }
            }

            Op::Gather { x, indices } => {
                if rg(*x) {
                    let slot = slot(grads, x.0, len(*x));
                    for (t, &i) in indices.iter().enumerate() {
                        slot[i] += g[t];
                    }
                }
            }
        }
    }
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], id: usize, len: usize) -> &'a mut Vec<f64> {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}

fn row_norm(row: &[f64]) -> f64 {
    fmath::sqrt(row.iter().map(|&x| x * x).sum())
}

/// C[m,n] += A[m,k] @ B[k,n]
fn mm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// C[m,n] += A[m,k] @ B[n,k]^T
fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out[i * n + j] += acc;
        }
    }
}

/// C[k,n] += A[m,k]^T @ B[m,n]
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}
