//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Adjoint rules are expressed with the same tensor operations they
//! differentiate. Running a backward pass in [`GradMode::RecordHigherOrder`]
//! therefore appends the gradient computation to the graph, and the returned
//! gradients can be differentiated again (reverse-over-reverse). This is what
//! gives `u_tt`, `u_xx` and Hessian-vector products without a second engine.
//!
//! ```
//! use pinnsformer_autodiff::{grad, Graph};
//!
//! let g = Graph::new();
//! let x = g.leaf(vec![0.0], &[1]).unwrap();
//! let y = x.sin();
//! let dy = grad(&y.sum_all(), &[&x], true).unwrap();
//! let d2y = grad(&dy[0].sum_all(), &[&x], false).unwrap();
//! assert_eq!(dy[0].item(), 1.0);
//! assert_eq!(d2y[0].item(), 0.0);
//! ```

mod backward;
mod error;
mod graph;
mod kernels;
mod tensor;

pub use backward::{grad, grad_with_seed};
pub use error::{AutodiffError, Result};
pub use graph::{BinaryOp, Diagnostics, GradMode, Graph, UnaryOp};
pub use tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

pub fn unary(op: UnaryOp, x: &Tensor) -> Tensor {
    x.unary(op)
}

pub fn binary(op: BinaryOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.binary(op, b)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.matmul(b)
}

/// Reduces over `axes` (all axes when empty), dropping the reduced axes.
pub fn reduce(op: ReduceOp, x: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let all: Vec<usize>;
    let axes = if axes.is_empty() {
        all = (0..x.rank()).collect();
        &all
    } else {
        axes
    };
    match op {
        ReduceOp::Sum => x.sum_axes(axes, false),
        ReduceOp::Mean => x.mean_axes(axes, false),
    }
}

/// Inner product of two equally shaped tensors, as a scalar tensor.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::IncompatibleShapes {
            op: "dot",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(a.mul(b)?.sum_all())
}
