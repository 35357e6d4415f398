//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! The graph is an append-only list of nodes; inputs always precede their
//! consumers, so one reverse sweep over the list visits every node exactly
//! once and accumulates exact gradients by the chain rule. A fresh graph is
//! built for every loss evaluation.

use crate::autodiff::matops;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    /// Input node; `param` marks it as a differentiation target.
    Leaf { param: bool },
    /// a[m×k] · b[k×n]
    MatMul,
    /// x[B×i], w[o×i], b[o]  →  x·wᵀ + b
    Linear,
    /// Elementwise sum; rhs may be a rank-1 row broadcast over lhs rows.
    Add,
    /// Elementwise difference of equal shapes.
    Sub,
    /// Elementwise product; supports [B×1] column and rank-1 row broadcasts.
    Mul,
    ScalarMul(f64),
    /// y = mul·x + add, elementwise. The offset only matters forward;
    /// backward needs the slope alone.
    AffineScalar { mul: f64 },
    Tanh,
    /// ELU with α = 1.
    Elu,
    /// Derivative of ELU(α=1); differentiable once more (the second
    /// derivative of the Hamiltonian flows through this node's backward).
    EluPrime,
    Square,
    /// Full reduction to a scalar.
    Sum,
    /// Full reduction to a scalar, divided by the element count.
    Mean,
    /// [B×n] → [B×1]
    RowSum,
    Transpose,
    /// Column-wise concatenation of rank-2 tensors with equal row counts.
    ConcatCols,
    /// Columns `start..end`.
    SliceCols { start: usize, end: usize },
    /// (flat [B×r·c] row-major per sample, v[B×c]) → A·v per sample, [B×r].
    BatchMatVec { rows: usize, cols: usize },
    /// (flat [B×r·c], w[B×r]) → Aᵀ·w per sample, [B×c].
    BatchMatVecT { rows: usize, cols: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Append-only computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
///
/// Gradients of non-parameter nodes are dropped as soon as the sweep no
/// longer needs them; parameter leaves keep theirs.
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf, materializing zeros when the leaf does not reach
    /// the loss.
    pub fn for_leaf(&self, graph: &Graph, id: NodeId) -> Tensor {
        match &self.slots[id.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(graph.value(id).shape()),
        }
    }

    /// Moves the gradient for a leaf out of the store (zeros if absent).
    pub fn take_for_leaf(&mut self, graph: &Graph, id: NodeId) -> Tensor {
        match self.slots[id.0].take() {
            Some(t) => t,
            None => Tensor::zeros(graph.value(id).shape()),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cached output of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Inserts a constant (non-parameter) leaf.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: false }, vec![], value)
    }

    /// Inserts a parameter leaf; `backward` reports a gradient for it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: true }, vec![], value)
    }

    /// Ids of all parameter leaves, in insertion order.
    pub fn param_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf { param: true }))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        id
    }

    fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        }
    }

    // ── arithmetic ops ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ndim() != 2 || vb.ndim() != 2 || va.cols() != vb.rows() {
            return Err(Self::shape_err("matmul", va, vb));
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; m * n];
        matops::gemm_nn(m, k, n, va.data(), vb.data(), &mut out);
        let t = Tensor::from_parts_unchecked(vec![m, n], out);
        Ok(self.push(Op::MatMul, vec![a, b], t))
    }

    /// Fused affine layer: `x·wᵀ + b` with `x:[B×i]`, `w:[o×i]`, `b:[o]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        if vx.ndim() != 2 || vw.ndim() != 2 || vx.cols() != vw.cols() {
            return Err(Self::shape_err("linear", vx, vw));
        }
        if vb.ndim() != 1 || vb.len() != vw.rows() {
            return Err(Self::shape_err("linear(bias)", vw, vb));
        }
        let (batch, inp, out_dim) = (vx.rows(), vx.cols(), vw.rows());
        let mut out = vec![0.0; batch * out_dim];
        for r in 0..batch {
            out[r * out_dim..(r + 1) * out_dim].copy_from_slice(vb.data());
        }
        // w transposed once: the accumulation form vectorizes, the
        // row-dot form is a serial reduction
        let mut wt = vec![0.0; inp * out_dim];
        for o in 0..out_dim {
            for i in 0..inp {
                wt[i * out_dim + o] = vw.data()[o * inp + i];
            }
        }
        matops::gemm_nn(batch, inp, out_dim, vx.data(), &wt, &mut out);
        let t = Tensor::from_parts_unchecked(vec![batch, out_dim], out);
        Ok(self.push(Op::Linear, vec![x, w, b], t))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let t = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
            Tensor::from_parts_unchecked(va.shape().to_vec(), data)
        } else if va.ndim() == 2 && vb.ndim() == 1 && va.cols() == vb.len() {
            // row broadcast of rhs
            let (rows, cols) = (va.rows(), va.cols());
            let mut data = va.data().to_vec();
            for r in 0..rows {
                for c in 0..cols {
                    data[r * cols + c] += vb.data()[c];
                }
            }
            Tensor::from_parts_unchecked(va.shape().to_vec(), data)
        } else {
            return Err(Self::shape_err("add", va, vb));
        };
        Ok(self.push(Op::Add, vec![a, b], t))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Self::shape_err("sub", va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::from_parts_unchecked(va.shape().to_vec(), data);
        Ok(self.push(Op::Sub, vec![a, b], t))
    }

    /// Elementwise product. Accepts equal shapes, a `[B×1]` factor broadcast
    /// across columns (either side), or a rank-1 rhs broadcast across rows.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let t = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
            Tensor::from_parts_unchecked(va.shape().to_vec(), data)
        } else if va.ndim() == 2 && vb.ndim() == 2 && vb.cols() == 1 && va.rows() == vb.rows() {
            let (rows, cols) = (va.rows(), va.cols());
            let mut data = va.data().to_vec();
            for r in 0..rows {
                let f = vb.data()[r];
                for v in &mut data[r * cols..(r + 1) * cols] {
                    *v *= f;
                }
            }
            Tensor::from_parts_unchecked(va.shape().to_vec(), data)
        } else if va.ndim() == 2 && vb.ndim() == 2 && va.cols() == 1 && va.rows() == vb.rows() {
            let (rows, cols) = (vb.rows(), vb.cols());
            let mut data = vb.data().to_vec();
            for r in 0..rows {
                let f = va.data()[r];
                for v in &mut data[r * cols..(r + 1) * cols] {
                    *v *= f;
                }
            }
            Tensor::from_parts_unchecked(vb.shape().to_vec(), data)
        } else if va.ndim() == 2 && vb.ndim() == 1 && va.cols() == vb.len() {
            let (rows, cols) = (va.rows(), va.cols());
            let mut data = va.data().to_vec();
            for r in 0..rows {
                for c in 0..cols {
                    data[r * cols + c] *= vb.data()[c];
                }
            }
            Tensor::from_parts_unchecked(va.shape().to_vec(), data)
        } else {
            return Err(Self::shape_err("mul", va, vb));
        };
        Ok(self.push(Op::Mul, vec![a, b], t))
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: f64) -> NodeId {
        let t = self.value(a).map(|v| c * v);
        self.push(Op::ScalarMul(c), vec![a], t)
    }

    /// `mul·x + add`, elementwise.
    pub fn affine_scalar(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let t = self.value(a).map(|v| mul * v + add);
        self.push(Op::AffineScalar { mul }, vec![a], t)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(f64::tanh);
        self.push(Op::Tanh, vec![a], t)
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(|v| if v > 0.0 { v } else { v.exp() - 1.0 });
        self.push(Op::Elu, vec![a], t)
    }

    /// ELU'(x): 1 for x > 0, eˣ otherwise.
    pub fn elu_prime(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(|v| if v > 0.0 { 1.0 } else { v.exp() });
        self.push(Op::EluPrime, vec![a], t)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(|v| v * v);
        self.push(Op::Square, vec![a], t)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum, vec![a], Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s: f64 = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean, vec![a], Tensor::scalar(s))
    }

    /// Sum across columns: `[B×n] → [B×1]`.
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.ndim() != 2 {
            return Err(Self::shape_err("row_sum", va, va));
        }
        let (rows, cols) = (va.rows(), va.cols());
        let data = (0..rows)
            .map(|r| va.data()[r * cols..(r + 1) * cols].iter().sum())
            .collect();
        let t = Tensor::from_parts_unchecked(vec![rows, 1], data);
        Ok(self.push(Op::RowSum, vec![a], t))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.ndim() != 2 {
            return Err(Self::shape_err("transpose", va, va));
        }
        let (rows, cols) = (va.rows(), va.cols());
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = va.data()[r * cols + c];
            }
        }
        let t = Tensor::from_parts_unchecked(vec![cols, rows], data);
        Ok(self.push(Op::Transpose, vec![a], t))
    }

    /// Concatenates rank-2 tensors along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols: empty input list"));
        }
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            let v = self.value(p);
            if v.ndim() != 2 || v.rows() != rows {
                return Err(Self::shape_err("concat_cols", self.value(parts[0]), v));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = vec![0.0; rows * total];
        let mut at = 0;
        for &p in parts {
            let v = self.value(p);
            let c = v.cols();
            for r in 0..rows {
                data[r * total + at..r * total + at + c].copy_from_slice(v.row(r));
            }
            at += c;
        }
        let t = Tensor::from_parts_unchecked(vec![rows, total], data);
        Ok(self.push(Op::ConcatCols, parts.to_vec(), t))
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let va = self.value(a);
        if va.ndim() != 2 || start >= end || end > va.cols() {
            return Err(Error::invalid(format!(
                "slice_cols: range {}..{} invalid for shape {:?}",
                start,
                end,
                va.shape()
            )));
        }
        let (rows, cols, width) = (va.rows(), va.cols(), end - start);
        let mut data = vec![0.0; rows * width];
        for r in 0..rows {
            data[r * width..(r + 1) * width]
                .copy_from_slice(&va.data()[r * cols + start..r * cols + end]);
        }
        let t = Tensor::from_parts_unchecked(vec![rows, width], data);
        Ok(self.push(Op::SliceCols { start, end }, vec![a], t))
    }

    /// Per-sample matrix-vector product. `flat` holds one row-major
    /// `rows×cols` matrix per batch row; `v` holds one `cols`-vector.
    pub fn batch_matvec(
        &mut self,
        flat: NodeId,
        v: NodeId,
        rows: usize,
        cols: usize,
    ) -> Result<NodeId> {
        let (vf, vv) = (self.value(flat), self.value(v));
        if vf.ndim() != 2
            || vv.ndim() != 2
            || vf.cols() != rows * cols
            || vv.cols() != cols
            || vf.rows() != vv.rows()
        {
            return Err(Self::shape_err("batch_matvec", vf, vv));
        }
        let batch = vf.rows();
        let mut data = vec![0.0; batch * rows];
        for b in 0..batch {
            matops::matvec(
                rows,
                cols,
                vf.row(b),
                vv.row(b),
                &mut data[b * rows..(b + 1) * rows],
            );
        }
        let t = Tensor::from_parts_unchecked(vec![batch, rows], data);
        Ok(self.push(Op::BatchMatVec { rows, cols }, vec![flat, v], t))
    }

    /// Per-sample transposed matrix-vector product (`Aᵀ·w` per batch row).
    pub fn batch_matvec_t(
        &mut self,
        flat: NodeId,
        w: NodeId,
        rows: usize,
        cols: usize,
    ) -> Result<NodeId> {
        let (vf, vw) = (self.value(flat), self.value(w));
        if vf.ndim() != 2
            || vw.ndim() != 2
            || vf.cols() != rows * cols
            || vw.cols() != rows
            || vf.rows() != vw.rows()
        {
            return Err(Self::shape_err("batch_matvec_t", vf, vw));
        }
        let batch = vf.rows();
        let mut data = vec![0.0; batch * cols];
        for b in 0..batch {
            matops::matvec_t(
                rows,
                cols,
                vf.row(b),
                vw.row(b),
                &mut data[b * cols..(b + 1) * cols],
            );
        }
        let t = Tensor::from_parts_unchecked(vec![batch, cols], data);
        Ok(self.push(Op::BatchMatVecT { rows, cols }, vec![flat, w], t))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss node. Returns gradients for every
    /// parameter leaf; leaves that do not reach the loss get zeros on read.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut slots: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[loss.0] = Some(Tensor::from_parts_unchecked(
            self.value(loss).shape().to_vec(),
            vec![1.0],
        ));

        for idx in (0..=loss.0).rev() {
            let Some(g) = slots[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf { param } => {
                    if param {
                        slots[idx] = Some(g);
                    }
                    continue;
                }
                _ => self.backprop_node(idx, &g, &mut slots),
            }
        }
        Ok(Gradients { slots })
    }

    fn grad_slot<'a>(
        &self,
        slots: &'a mut [Option<Tensor>],
        id: NodeId,
    ) -> &'a mut Tensor {
        let slot = &mut slots[id.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(id).shape()));
        }
        slot.as_mut().unwrap()
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, slots: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let ins = &node.inputs;
        match node.op {
            Op::Leaf { .. } => unreachable!(),
            Op::MatMul => {
                let (a, b) = (self.value(ins[0]), self.value(ins[1]));
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                {
                    let da = self.grad_slot(slots, ins[0]);
                    matops::gemm_nt(m, n, k, g.data(), b.data(), da.data_mut());
                }
                let db = self.grad_slot(slots, ins[1]);
                matops::gemm_tn(k, m, n, a.data(), g.data(), db.data_mut());
            }
            Op::Linear => {
                let (x, w) = (self.value(ins[0]), self.value(ins[1]));
                let (batch, inp, out_dim) = (x.rows(), x.cols(), w.rows());
                {
                    let dx = self.grad_slot(slots, ins[0]);
                    matops::gemm_nn(batch, out_dim, inp, g.data(), w.data(), dx.data_mut());
                }
                {
                    let dw = self.grad_slot(slots, ins[1]);
                    matops::gemm_tn(out_dim, batch, inp, g.data(), x.data(), dw.data_mut());
                }
                let db = self.grad_slot(slots, ins[2]);
                for r in 0..batch {
                    matops::axpy(1.0, &g.data()[r * out_dim..(r + 1) * out_dim], db.data_mut());
                }
            }
            Op::Add => {
                let broadcast = self.value(ins[1]).shape() != g.shape();
                {
                    let da = self.grad_slot(slots, ins[0]);
                    matops::axpy(1.0, g.data(), da.data_mut());
                }
                let db = self.grad_slot(slots, ins[1]);
                if broadcast {
                    let cols = db.len();
                    for row in g.data().chunks_exact(cols) {
                        matops::axpy(1.0, row, db.data_mut());
                    }
                } else {
                    matops::axpy(1.0, g.data(), db.data_mut());
                }
            }
            Op::Sub => {
                {
                    let da = self.grad_slot(slots, ins[0]);
                    matops::axpy(1.0, g.data(), da.data_mut());
                }
                let db = self.grad_slot(slots, ins[1]);
                matops::axpy(-1.0, g.data(), db.data_mut());
            }
            Op::Mul => self.backprop_mul(ins, g, slots),
            Op::ScalarMul(c) => {
                let da = self.grad_slot(slots, ins[0]);
                matops::axpy(c, g.data(), da.data_mut());
            }
            Op::AffineScalar { mul, .. } => {
                let da = self.grad_slot(slots, ins[0]);
                matops::axpy(mul, g.data(), da.data_mut());
            }
            Op::Tanh => {
                let y = &node.value;
                let da = self.grad_slot(slots, ins[0]);
                for ((d, &gv), &yv) in da.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gv * (1.0 - yv * yv);
                }
            }
            Op::Elu => {
                let (x, y) = (self.value(ins[0]), &node.value);
                let da = self.grad_slot(slots, ins[0]);
                for i in 0..x.len() {
                    let slope = if x.data()[i] > 0.0 { 1.0 } else { y.data()[i] + 1.0 };
                    da.data_mut()[i] += g.data()[i] * slope;
                }
            }
            Op::EluPrime => {
                // y = elu'(x); y' = 0 for x > 0, eˣ = y otherwise.
                let (x, y) = (self.value(ins[0]), &node.value);
                let da = self.grad_slot(slots, ins[0]);
                for i in 0..x.len() {
                    let slope = if x.data()[i] > 0.0 { 0.0 } else { y.data()[i] };
                    da.data_mut()[i] += g.data()[i] * slope;
                }
            }
            Op::Square => {
                let x = self.value(ins[0]);
                let da = self.grad_slot(slots, ins[0]);
                for i in 0..x.len() {
                    da.data_mut()[i] += g.data()[i] * 2.0 * x.data()[i];
                }
            }
            Op::Sum => {
                let gv = g.item();
                let da = self.grad_slot(slots, ins[0]);
                for d in da.data_mut() {
                    *d += gv;
                }
            }
            Op::Mean => {
                let n = self.value(ins[0]).len() as f64;
                let gv = g.item() / n;
                let da = self.grad_slot(slots, ins[0]);
                for d in da.data_mut() {
                    *d += gv;
                }
            }
            Op::RowSum => {
                let cols = self.value(ins[0]).cols();
                let da = self.grad_slot(slots, ins[0]);
                for (r, row) in da.data_mut().chunks_exact_mut(cols).enumerate() {
                    let gv = g.data()[r];
                    for d in row {
                        *d += gv;
                    }
                }
            }
            Op::Transpose => {
                let (rows, cols) = (g.rows(), g.cols());
                let da = self.grad_slot(slots, ins[0]);
                let dd = da.data_mut();
                for r in 0..rows {
                    for c in 0..cols {
                        dd[c * rows + r] += g.data()[r * cols + c];
                    }
                }
            }
            Op::ConcatCols => {
                let total = g.cols();
                let rows = g.rows();
                let mut at = 0;
                for &p in ins {
                    let c = self.value(p).cols();
                    let dp = self.grad_slot(slots, p);
                    for r in 0..rows {
                        matops::axpy(
                            1.0,
                            &g.data()[r * total + at..r * total + at + c],
                            &mut dp.data_mut()[r * c..(r + 1) * c],
                        );
                    }
                    at += c;
                }
            }
            Op::SliceCols { start, end } => {
                let cols = self.value(ins[0]).cols();
                let width = end - start;
                let da = self.grad_slot(slots, ins[0]);
                for r in 0..g.rows() {
                    matops::axpy(
                        1.0,
                        &g.data()[r * width..(r + 1) * width],
                        &mut da.data_mut()[r * cols + start..r * cols + end],
                    );
                }
            }
            Op::BatchMatVec { rows, cols } => {
                let (a, v) = (self.value(ins[0]), self.value(ins[1]));
                let batch = a.rows();
                {
                    let da = self.grad_slot(slots, ins[0]);
                    for b in 0..batch {
                        let gb = &g.data()[b * rows..(b + 1) * rows];
                        let vb = v.row(b);
                        let ab = &mut da.data_mut()[b * rows * cols..(b + 1) * rows * cols];
                        for i in 0..rows {
                            matops::axpy(gb[i], vb, &mut ab[i * cols..(i + 1) * cols]);
                        }
                    }
                }
                let dv = self.grad_slot(slots, ins[1]);
                for b in 0..batch {
                    matops::matvec_t(
                        rows,
                        cols,
                        a.row(b),
                        &g.data()[b * rows..(b + 1) * rows],
                        &mut dv.data_mut()[b * cols..(b + 1) * cols],
                    );
                }
            }
            Op::BatchMatVecT { rows, cols } => {
                let (a, w) = (self.value(ins[0]), self.value(ins[1]));
                let batch = a.rows();
                {
                    let da = self.grad_slot(slots, ins[0]);
                    for b in 0..batch {
                        let gb = &g.data()[b * cols..(b + 1) * cols];
                        let wb = w.row(b);
                        let ab = &mut da.data_mut()[b * rows * cols..(b + 1) * rows * cols];
                        for i in 0..rows {
                            matops::axpy(wb[i], gb, &mut ab[i * cols..(i + 1) * cols]);
                        }
                    }
                }
                let dw = self.grad_slot(slots, ins[1]);
                for b in 0..batch {
                    matops::matvec(
                        rows,
                        cols,
                        a.row(b),
                        &g.data()[b * cols..(b + 1) * cols],
                        &mut dw.data_mut()[b * rows..(b + 1) * rows],
                    );
                }
            }
        }
    }

    fn backprop_mul(&self, ins: &[NodeId], g: &Tensor, slots: &mut [Option<Tensor>]) {
        let (a, b) = (self.value(ins[0]), self.value(ins[1]));
        if a.shape() == b.shape() {
            {
                let da = self.grad_slot(slots, ins[0]);
                for i in 0..g.len() {
                    da.data_mut()[i] += g.data()[i] * b.data()[i];
                }
            }
            let db = self.grad_slot(slots, ins[1]);
            for i in 0..g.len() {
                db.data_mut()[i] += g.data()[i] * a.data()[i];
            }
        } else if b.ndim() == 2 && b.cols() == 1 {
            // y[r,c] = a[r,c]·b[r]
            let (rows, cols) = (a.rows(), a.cols());
            {
                let da = self.grad_slot(slots, ins[0]);
                for r in 0..rows {
                    matops::axpy(
                        b.data()[r],
                        &g.data()[r * cols..(r + 1) * cols],
                        &mut da.data_mut()[r * cols..(r + 1) * cols],
                    );
                }
            }
            let db = self.grad_slot(slots, ins[1]);
            for r in 0..rows {
                db.data_mut()[r] += matops::dot(
                    &g.data()[r * cols..(r + 1) * cols],
                    &a.data()[r * cols..(r + 1) * cols],
                );
            }
        } else if a.ndim() == 2 && a.cols() == 1 {
            // y[r,c] = a[r]·b[r,c]
            let (rows, cols) = (b.rows(), b.cols());
            {
                let da = self.grad_slot(slots, ins[0]);
                for r in 0..rows {
                    da.data_mut()[r] += matops::dot(
                        &g.data()[r * cols..(r + 1) * cols],
                        &b.data()[r * cols..(r + 1) * cols],
                    );
                }
            }
            let db = self.grad_slot(slots, ins[1]);
            for r in 0..rows {
                matops::axpy(
                    a.data()[r],
                    &g.data()[r * cols..(r + 1) * cols],
                    &mut db.data_mut()[r * cols..(r + 1) * cols],
                );
            }
        } else {
            // rank-1 rhs broadcast across rows
            let (rows, cols) = (a.rows(), a.cols());
            {
                let da = self.grad_slot(slots, ins[0]);
                for r in 0..rows {
                    for c in 0..cols {
                        da.data_mut()[r * cols + c] += g.data()[r * cols + c] * b.data()[c];
                    }
                }
            }
            let db = self.grad_slot(slots, ins[1]);
            for r in 0..rows {
                for c in 0..cols {
                    db.data_mut()[c] += g.data()[r * cols + c] * a.data()[r * cols + c];
                }
            }
        }
    }
}
