use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::kernels::numel;
use crate::tensor::Tensor;

/// Whether operations on tracked tensors append nodes to the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Nothing is recorded; results are constants.
    None,
    /// Forward operations are recorded; backward passes are not.
    Record,
    /// Backward passes are recorded too, so gradients can be differentiated again.
    RecordHigherOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Sin,
    Cos,
    Tanh,
    Exp,
    Square,
    Negate,
    Relu,
    Sigmoid,
    /// Heaviside step `x > 0`, the derivative mask of `Relu`. Has zero derivative.
    Step,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Unary(UnaryOp),
    Binary(BinaryOp),
    Scale(f64),
    Offset,
    MatMul { ta: bool, tb: bool },
    Reshape,
    BroadcastTo,
    SumTo,
    Narrow { axis: usize, start: usize },
    Pad { axis: usize, start: usize },
    Concat { axis: usize },
}

/// A tensor's value as held by the tape, detached from any graph handle.
#[derive(Clone, Debug)]
pub(crate) struct Saved {
    pub data: Rc<Vec<f64>>,
    pub shape: Vec<usize>,
    pub id: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<Saved>,
    pub output: Saved,
}

/// Counters for numerically suspicious events seen while recording.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub nonfinite_outputs: usize,
    pub divisions_by_zero: usize,
}

#[derive(Debug)]
pub(crate) struct Tape {
    pub nodes: Vec<Node>,
    pub mode: GradMode,
    pub memo: HashMap<(UnaryOp, usize), Saved>,
    pub diagnostics: Diagnostics,
}

/// Append-only computation graph. Cheap to clone (shared handle); confined to
/// one thread.
#[derive(Clone, Debug)]
pub struct Graph(pub(crate) Rc<RefCell<Tape>>);

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::with_mode(GradMode::RecordHigherOrder)
    }

    pub fn with_mode(mode: GradMode) -> Self {
        Graph(Rc::new(RefCell::new(Tape {
            nodes: Vec::new(),
            mode,
            memo: HashMap::new(),
            diagnostics: Diagnostics::default(),
        })))
    }

    pub fn mode(&self) -> GradMode {
        self.0.borrow().mode
    }

    pub fn set_mode(&self, mode: GradMode) {
        self.0.borrow_mut().mode = mode;
    }

    pub fn len(&self) -> usize {
        self.0.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.0.borrow().diagnostics
    }

    pub fn same_as(&self, other: &Graph) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Creates a differentiable leaf. Leaves are recorded in every mode.
    pub fn leaf(&self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(AutodiffError::DataLength {
                shape: shape.to_vec(),
                expected: numel(shape),
                actual: data.len(),
            });
        }
        let data = Rc::new(data);
        let id = self.push(Op::Leaf, Vec::new(), data.clone(), shape.to_vec());
        Ok(Tensor::tracked(data, shape.to_vec(), self.clone(), id))
    }

    /// Turns an existing value into a leaf of this graph.
    pub fn leaf_from(&self, t: &Tensor) -> Tensor {
        let data = t.shared_data();
        let id = self.push(Op::Leaf, Vec::new(), data.clone(), t.shape().to_vec());
        Tensor::tracked(data, t.shape().to_vec(), self.clone(), id)
    }

    pub(crate) fn recording(&self) -> bool {
        self.mode() != GradMode::None
    }

    pub(crate) fn push(
        &self,
        op: Op,
        inputs: Vec<Saved>,
        data: Rc<Vec<f64>>,
        shape: Vec<usize>,
    ) -> usize {
        let mut tape = self.0.borrow_mut();
        let id = tape.nodes.len();
        tape.nodes.push(Node {
            op,
            inputs,
            output: Saved { data, shape, id: Some(id) },
        });
        id
    }

    pub(crate) fn node(&self, id: usize) -> Node {
        self.0.borrow().nodes[id].clone()
    }

    pub(crate) fn memo_get(&self, op: UnaryOp, input: usize) -> Option<Tensor> {
        let tape = self.0.borrow();
        tape.memo.get(&(op, input)).map(|s| Tensor::from_saved(self, s))
    }

    pub(crate) fn memo_put(&self, op: UnaryOp, input: usize, out: &Tensor) {
        if let Some(saved) = out.saved_if_tracked() {
            self.0.borrow_mut().memo.insert((op, input), saved);
        }
    }

    pub(crate) fn note_nonfinite(&self) {
        self.0.borrow_mut().diagnostics.nonfinite_outputs += 1;
    }

    pub(crate) fn note_division_by_zero(&self) {
        self.0.borrow_mut().diagnostics.divisions_by_zero += 1;
    }
}

/// Restores the previous grad mode on drop.
pub(crate) struct ModeGuard {
    graph: Graph,
    previous: GradMode,
}

impl ModeGuard {
    pub fn set(graph: &Graph, mode: GradMode) -> Self {
        let previous = graph.mode();
        graph.set_mode(mode);
        ModeGuard { graph: graph.clone(), previous }
    }
}

impl Drop for ModeGuard {
    fn drop(&mut self) {
        self.graph.set_mode(self.previous);
    }
}
