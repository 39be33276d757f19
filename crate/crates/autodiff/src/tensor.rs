use std::fmt;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::graph::{BinaryOp, Graph, Op, Saved, UnaryOp};
use crate::kernels::{self, numel, MatView};

/// Dense row-major `f64` array, optionally tracked by a [`Graph`].
#[derive(Clone)]
pub struct Tensor {
    data: Rc<Vec<f64>>,
    shape: Vec<usize>,
    node: Option<(Graph, usize)>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("node", &self.node.as_ref().map(|(_, id)| *id))
            .field("values", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(AutodiffError::DataLength {
                shape: shape.to_vec(),
                expected: numel(shape),
                actual: data.len(),
            });
        }
        Ok(Self::constant(Rc::new(data), shape.to_vec()))
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(Rc::new(vec![value]), Vec::new())
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::constant(Rc::new(vec![value; numel(shape)]), shape.to_vec())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub(crate) fn constant(data: Rc<Vec<f64>>, shape: Vec<usize>) -> Self {
        Tensor { data, shape, node: None }
    }

    pub(crate) fn tracked(data: Rc<Vec<f64>>, shape: Vec<usize>, graph: Graph, id: usize) -> Self {
        Tensor { data, shape, node: Some((graph, id)) }
    }

    pub(crate) fn from_saved(graph: &Graph, saved: &Saved) -> Self {
        Tensor {
            data: saved.data.clone(),
            shape: saved.shape.clone(),
            node: saved.id.map(|id| (graph.clone(), id)),
        }
    }

    pub(crate) fn saved(&self) -> Saved {
        Saved {
            data: self.data.clone(),
            shape: self.shape.clone(),
            id: self.node.as_ref().map(|(_, id)| *id),
        }
    }

    pub(crate) fn saved_if_tracked(&self) -> Option<Saved> {
        self.node.as_ref().map(|_| self.saved())
    }

    pub(crate) fn shared_data(&self) -> Rc<Vec<f64>> {
        self.data.clone()
    }

    pub(crate) fn node_id(&self) -> Option<usize> {
        self.node.as_ref().map(|(_, id)| *id)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.as_ref().clone()
    }

    /// First stored value; meant for scalars.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// True when the tensor is a node of some graph (a leaf or a recorded result).
    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.node.as_ref().map(|(g, _)| g)
    }

    pub fn detach(&self) -> Tensor {
        Self::constant(self.data.clone(), self.shape.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    // ---- recording -------------------------------------------------------

    fn common_graph(inputs: &[&Tensor]) -> Result<Option<Graph>> {
        let mut found: Option<&Graph> = None;
        for t in inputs {
            if let Some((g, _)) = &t.node {
                match found {
                    Some(f) if !f.same_as(g) => return Err(AutodiffError::GraphMismatch),
                    _ => found = Some(g),
                }
            }
        }
        Ok(found.cloned())
    }

    fn record(op: Op, inputs: &[&Tensor], data: Rc<Vec<f64>>, shape: Vec<usize>) -> Result<Tensor> {
        match Self::common_graph(inputs)? {
            Some(graph) if graph.recording() => {
                let saved = inputs.iter().map(|t| t.saved()).collect();
                let id = graph.push(op, saved, data.clone(), shape.clone());
                Ok(Tensor::tracked(data, shape, graph, id))
            }
            _ => Ok(Tensor::constant(data, shape)),
        }
    }

    fn record_one(&self, op: Op, data: Vec<f64>, shape: Vec<usize>) -> Tensor {
        Self::record(op, &[self], Rc::new(data), shape).expect("a single input cannot mix graphs")
    }

    // ---- elementwise -----------------------------------------------------

    pub fn unary(&self, op: UnaryOp) -> Tensor {
        if let Some((graph, id)) = &self.node {
            if let Some(hit) = graph.memo_get(op, *id) {
                return hit;
            }
        }
        let x = self.values();
        let data: Vec<f64> = match op {
            UnaryOp::Sin => x.iter().map(|v| v.sin()).collect(),
            UnaryOp::Cos => x.iter().map(|v| v.cos()).collect(),
            UnaryOp::Tanh => x.iter().map(|v| v.tanh()).collect(),
            UnaryOp::Exp => x.iter().map(|v| v.exp()).collect(),
            UnaryOp::Square => x.iter().map(|v| v * v).collect(),
            UnaryOp::Negate => x.iter().map(|v| -v).collect(),
            UnaryOp::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            UnaryOp::Sigmoid => x.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
            UnaryOp::Step => x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
        };
        if matches!(op, UnaryOp::Exp | UnaryOp::Square) && !data.iter().all(|v| v.is_finite()) {
            if let Some(g) = self.graph() {
                g.note_nonfinite();
            }
        }
        let out = self.record_one(Op::Unary(op), data, self.shape.clone());
        if let Some((graph, id)) = &self.node {
            graph.memo_put(op, *id, &out);
        }
        out
    }

    pub fn sin(&self) -> Tensor {
        self.unary(UnaryOp::Sin)
    }
    pub fn cos(&self) -> Tensor {
        self.unary(UnaryOp::Cos)
    }
    pub fn tanh(&self) -> Tensor {
        self.unary(UnaryOp::Tanh)
    }
    pub fn exp(&self) -> Tensor {
        self.unary(UnaryOp::Exp)
    }
    pub fn square(&self) -> Tensor {
        self.unary(UnaryOp::Square)
    }
    pub fn neg(&self) -> Tensor {
        self.unary(UnaryOp::Negate)
    }
    pub fn relu(&self) -> Tensor {
        self.unary(UnaryOp::Relu)
    }
    pub fn sigmoid(&self) -> Tensor {
        self.unary(UnaryOp::Sigmoid)
    }
    pub fn step(&self) -> Tensor {
        self.unary(UnaryOp::Step)
    }

    pub fn binary(&self, op: BinaryOp, other: &Tensor) -> Result<Tensor> {
        let shape = kernels::broadcast_shapes(&self.shape, &other.shape).ok_or_else(|| {
            AutodiffError::IncompatibleShapes {
                op: "binary",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            }
        })?;
        let (a, b) = (self.values(), other.values());
        let data = match op {
            BinaryOp::Add => kernels::zip_broadcast(a, &self.shape, b, &other.shape, &shape, |x, y| x + y),
            BinaryOp::Sub => kernels::zip_broadcast(a, &self.shape, b, &other.shape, &shape, |x, y| x - y),
            BinaryOp::Mul => kernels::zip_broadcast(a, &self.shape, b, &other.shape, &shape, |x, y| x * y),
            BinaryOp::Div => {
                if b.contains(&0.0) {
                    if let Some(g) = self.graph().or(other.graph()) {
                        g.note_division_by_zero();
                    }
                }
                kernels::zip_broadcast(a, &self.shape, b, &other.shape, &shape, |x, y| x / y)
            }
        };
        Self::record(Op::Binary(op), &[self, other], Rc::new(data), shape)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Add, other)
    }
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Sub, other)
    }
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Mul, other)
    }
    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Div, other)
    }

    /// Multiplies by a constant.
    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.values().iter().map(|v| v * c).collect();
        self.record_one(Op::Scale(c), data, self.shape.clone())
    }

    /// Adds a constant.
    pub fn offset(&self, c: f64) -> Tensor {
        let data = self.values().iter().map(|v| v + c).collect();
        self.record_one(Op::Offset, data, self.shape.clone())
    }

    // ---- linear algebra --------------------------------------------------

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)` where `op` transposes the trailing two axes when
    /// the corresponding flag is set. Batch axes must match, or one operand
    /// must be a plain matrix shared across the other's batch.
    pub fn matmul_t(&self, other: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
        let mismatch = || AutodiffError::IncompatibleShapes {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.rank() < 2 || other.rank() < 2 {
            return Err(mismatch());
        }
        let (ar, ac) = (self.shape[self.rank() - 2], self.shape[self.rank() - 1]);
        let (br, bc) = (other.shape[other.rank() - 2], other.shape[other.rank() - 1]);
        let av = MatView::new(ar, ac, ta);
        let bv = MatView::new(br, bc, tb);
        if av.cols != bv.rows {
            return Err(mismatch());
        }
        let a_batch = &self.shape[..self.rank() - 2];
        let b_batch = &other.shape[..other.rank() - 2];
        let (m, n) = (av.rows, bv.cols);
        let (a, b) = (self.values(), other.values());

        let (batch, data) = if b_batch.is_empty() && !ta {
            // Fold the batch of `self` into its rows: a single product.
            let rows = numel(a_batch) * ar;
            let mut out = vec![0.0; rows * n];
            kernels::gemm(a, MatView::new(rows, ac, false), b, bv, &mut out);
            (a_batch.to_vec(), out)
        } else {
            let batch = if a_batch == b_batch || b_batch.is_empty() {
                a_batch.to_vec()
            } else if a_batch.is_empty() {
                b_batch.to_vec()
            } else {
                return Err(mismatch());
            };
            let count = numel(&batch);
            let (a_step, b_step) = (
                if a_batch.is_empty() { 0 } else { ar * ac },
                if b_batch.is_empty() { 0 } else { br * bc },
            );
            let mut out = vec![0.0; count * m * n];
            for i in 0..count {
                kernels::gemm(
                    &a[i * a_step..i * a_step + ar * ac],
                    av,
                    &b[i * b_step..i * b_step + br * bc],
                    bv,
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
            (batch, out)
        };
        let mut shape = batch;
        shape.extend_from_slice(&[m, n]);
        Self::record(Op::MatMul { ta, tb }, &[self, other], Rc::new(data), shape)
    }

    // ---- shape -----------------------------------------------------------

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(AutodiffError::IncompatibleShapes {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Self::record(Op::Reshape, &[self], self.data.clone(), shape.to_vec())
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        if kernels::broadcast_shapes(&self.shape, shape).as_deref() != Some(shape) {
            return Err(AutodiffError::IncompatibleShapes {
                op: "broadcast_to",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        if shape == self.shape.as_slice() {
            return Ok(self.clone());
        }
        let data = kernels::broadcast_to(self.values(), &self.shape, shape);
        Self::record(Op::BroadcastTo, &[self], Rc::new(data), shape.to_vec())
    }

    /// Sums over broadcast axes so the result has `shape`; the adjoint of
    /// [`Tensor::broadcast_to`].
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor> {
        if kernels::broadcast_shapes(shape, &self.shape).as_deref() != Some(self.shape.as_slice()) {
            return Err(AutodiffError::IncompatibleShapes {
                op: "sum_to",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        if shape == self.shape.as_slice() {
            return Ok(self.clone());
        }
        let data = kernels::sum_to(self.values(), &self.shape, shape);
        Self::record(Op::SumTo, &[self], Rc::new(data), shape.to_vec())
    }

    pub fn sum_all(&self) -> Tensor {
        self.sum_to(&[]).expect("every shape reduces to a scalar")
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum_all().scale(1.0 / n)
    }

    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        let mut kept = self.shape.clone();
        for &axis in axes {
            if axis >= self.rank() {
                return Err(AutodiffError::InvalidAxis { axis, rank: self.rank() });
            }
            kept[axis] = 1;
        }
        let summed = self.sum_to(&kept)?;
        if keepdim {
            return Ok(summed);
        }
        let squeezed: Vec<usize> = self
            .shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        summed.reshape(&squeezed)
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        let summed = self.sum_axes(axes, keepdim)?;
        let count: usize = axes.iter().map(|&a| self.shape[a]).product();
        Ok(summed.scale(1.0 / count.max(1) as f64))
    }

    fn check_range(&self, axis: usize, start: usize, len: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(AutodiffError::InvalidAxis { axis, rank: self.rank() });
        }
        if start + len > self.shape[axis] {
            return Err(AutodiffError::InvalidRange {
                start,
                end: start + len,
                len: self.shape[axis],
            });
        }
        Ok(())
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        self.check_range(axis, start, len)?;
        if start == 0 && len == self.shape[axis] {
            return Ok(self.clone());
        }
        let data = kernels::narrow(self.values(), &self.shape, axis, start, len);
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Self::record(Op::Narrow { axis, start }, &[self], Rc::new(data), shape)
    }

    /// Embeds `self` at offset `start` of a zero tensor whose `axis` has length `full`.
    pub fn pad(&self, axis: usize, start: usize, full: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(AutodiffError::InvalidAxis { axis, rank: self.rank() });
        }
        if start + self.shape[axis] > full {
            return Err(AutodiffError::InvalidRange {
                start,
                end: start + self.shape[axis],
                len: full,
            });
        }
        let data = kernels::pad(self.values(), &self.shape, axis, start, full);
        let mut shape = self.shape.clone();
        shape[axis] = full;
        Self::record(Op::Pad { axis, start }, &[self], Rc::new(data), shape)
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or(AutodiffError::IncompatibleShapes {
            op: "concat",
            lhs: Vec::new(),
            rhs: Vec::new(),
        })?;
        if axis >= first.rank() {
            return Err(AutodiffError::InvalidAxis { axis, rank: first.rank() });
        }
        let mut shape = first.shape.clone();
        shape[axis] = 0;
        for p in parts {
            let compatible = p.rank() == first.rank()
                && p.shape.iter().zip(&first.shape).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(AutodiffError::IncompatibleShapes {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            shape[axis] += p.shape[axis];
        }
        let views: Vec<(&[f64], &[usize])> = parts.iter().map(|p| (p.values(), p.shape())).collect();
        let data = kernels::concat(&views, axis);
        Self::record(Op::Concat { axis }, parts, Rc::new(data), shape)
    }

    /// Softmax along the last axis.
    pub fn softmax_last(&self) -> Result<Tensor> {
        let axis = self.rank().checked_sub(1).ok_or(AutodiffError::InvalidAxis { axis: 0, rank: 0 })?;
        let width = self.shape[axis];
        let mut keep = self.shape.clone();
        keep[axis] = 1;
        let maxima: Vec<f64> = self
            .values()
            .chunks(width.max(1))
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let shift = Tensor::new(maxima, &keep)?;
        let e = self.sub(&shift)?.exp();
        let total = e.sum_axes(&[axis], true)?;
        e.div(&total)
    }
}
