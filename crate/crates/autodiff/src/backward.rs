//! Reverse sweep. Every adjoint rule is written in terms of tensor operations,
//! so when the sweep runs in record-higher-order mode the gradients land on
//! the same graph and can be differentiated again.

use std::collections::HashMap;

use crate::error::{AutodiffError, Result};
use crate::graph::{BinaryOp, GradMode, Graph, ModeGuard, Node, Op, UnaryOp};
use crate::tensor::Tensor;

/// Gradient of a scalar `output` with respect to each tensor in `wrt`.
///
/// With `higher_order` the returned tensors are graph nodes themselves.
pub fn grad(output: &Tensor, wrt: &[&Tensor], higher_order: bool) -> Result<Vec<Tensor>> {
    if output.numel() != 1 {
        return Err(AutodiffError::NonScalarOutput(output.shape().to_vec()));
    }
    grad_with_seed(output, &Tensor::ones(output.shape()), wrt, higher_order)
}

/// Vector-Jacobian product `seedᵀ · ∂output/∂wrt` for a non-scalar `output`.
pub fn grad_with_seed(
    output: &Tensor,
    seed: &Tensor,
    wrt: &[&Tensor],
    higher_order: bool,
) -> Result<Vec<Tensor>> {
    if seed.shape() != output.shape() {
        return Err(AutodiffError::IncompatibleShapes {
            op: "grad seed",
            lhs: output.shape().to_vec(),
            rhs: seed.shape().to_vec(),
        });
    }
    let graph = output.graph().ok_or(AutodiffError::NotInGraph)?.clone();
    let out_id = output.node_id().ok_or(AutodiffError::NotInGraph)?;
    let mut wanted = HashMap::new();
    for w in wrt {
        match w.graph() {
            Some(g) if g.same_as(&graph) => {}
            _ => return Err(AutodiffError::NotInGraph),
        }
        let id = w.node_id().ok_or(AutodiffError::NotInGraph)?;
        wanted.insert(id, None::<Tensor>);
    }
    if higher_order && graph.mode() != GradMode::RecordHigherOrder {
        return Err(AutodiffError::HigherOrderDisabled);
    }

    let relevant = relevant_nodes(&graph, out_id, &wanted);
    let _guard = ModeGuard::set(
        &graph,
        if higher_order { GradMode::RecordHigherOrder } else { GradMode::None },
    );

    let mut grads: Vec<Option<Tensor>> = vec![None; out_id + 1];
    grads[out_id] = Some(seed.clone());
    for id in (0..=out_id).rev() {
        let Some(g) = grads[id].take() else { continue };
        if let Some(slot) = wanted.get_mut(&id) {
            *slot = Some(g.clone());
        }
        let node = graph.node(id);
        if matches!(node.op, Op::Leaf) {
            continue;
        }
        let needs: Vec<bool> = node
            .inputs
            .iter()
            .map(|s| s.id.is_some_and(|i| relevant[i]))
            .collect();
        if !needs.iter().any(|&n| n) {
            continue;
        }
        let contributions = vjp(&graph, &node, &g, &needs)?;
        for ((input, contrib), need) in node.inputs.iter().zip(contributions).zip(&needs) {
            let (Some(iid), Some(c), true) = (input.id, contrib, *need) else { continue };
            grads[iid] = Some(match grads[iid].take() {
                Some(prev) => prev.add(&c)?,
                None => c,
            });
        }
    }

    Ok(wrt
        .iter()
        .map(|w| {
            let id = w.node_id().expect("checked above");
            wanted
                .get(&id)
                .cloned()
                .flatten()
                .unwrap_or_else(|| Tensor::zeros(w.shape()))
        })
        .collect())
}

/// Marks nodes whose value depends on at least one requested tensor.
fn relevant_nodes(graph: &Graph, out_id: usize, wanted: &HashMap<usize, Option<Tensor>>) -> Vec<bool> {
    let tape = graph.0.borrow();
    let mut relevant = vec![false; out_id + 1];
    for id in 0..=out_id {
        relevant[id] = wanted.contains_key(&id)
            || tape.nodes[id]
                .inputs
                .iter()
                .any(|s| s.id.is_some_and(|i| relevant[i]));
    }
    relevant
}

fn reduce(t: Tensor, shape: &[usize]) -> Result<Tensor> {
    if t.shape() == shape {
        Ok(t)
    } else {
        t.sum_to(shape)
    }
}

fn vjp(graph: &Graph, node: &Node, g: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
    let inputs: Vec<Tensor> = node.inputs.iter().map(|s| Tensor::from_saved(graph, s)).collect();
    let out = Tensor::from_saved(graph, &node.output);
    let x = &inputs[0];
    let one = |t: Tensor| Ok(vec![Some(t)]);
    match &node.op {
        Op::Leaf => Ok(Vec::new()),
        Op::Unary(op) => match op {
            UnaryOp::Sin => one(g.mul(&x.cos())?),
            UnaryOp::Cos => one(g.mul(&x.sin())?.neg()),
            UnaryOp::Tanh => one(g.mul(&out.square().neg().offset(1.0))?),
            UnaryOp::Exp => one(g.mul(&out)?),
            UnaryOp::Square => one(g.mul(&x.scale(2.0))?),
            UnaryOp::Negate => one(g.neg()),
            UnaryOp::Relu => one(g.mul(&x.step())?),
            UnaryOp::Sigmoid => one(g.mul(&out.mul(&out.neg().offset(1.0))?)?),
            UnaryOp::Step => Ok(vec![None]),
        },
        Op::Binary(op) => {
            let (a, b) = (&inputs[0], &inputs[1]);
            let (ga, gb) = match op {
                BinaryOp::Add => (
                    needs[0].then(|| reduce(g.clone(), a.shape())).transpose()?,
                    needs[1].then(|| reduce(g.clone(), b.shape())).transpose()?,
                ),
                BinaryOp::Sub => (
                    needs[0].then(|| reduce(g.clone(), a.shape())).transpose()?,
                    needs[1].then(|| reduce(g.neg(), b.shape())).transpose()?,
                ),
                BinaryOp::Mul => (
                    needs[0].then(|| reduce(g.mul(b)?, a.shape())).transpose()?,
                    needs[1].then(|| reduce(g.mul(a)?, b.shape())).transpose()?,
                ),
                BinaryOp::Div => (
                    needs[0].then(|| reduce(g.div(b)?, a.shape())).transpose()?,
                    needs[1]
                        .then(|| reduce(g.mul(&out)?.div(b)?.neg(), b.shape()))
                        .transpose()?,
                ),
            };
            Ok(vec![ga, gb])
        }
        Op::Scale(c) => one(g.scale(*c)),
        Op::Offset => one(g.clone()),
        Op::MatMul { ta, tb } => {
            let (a, b) = (&inputs[0], &inputs[1]);
            let ga = if needs[0] {
                let raw = match (ta, tb) {
                    (false, false) => g.matmul_t(b, false, true)?,
                    (false, true) => g.matmul_t(b, false, false)?,
                    (true, false) => b.matmul_t(g, false, true)?,
                    (true, true) => b.matmul_t(g, true, true)?,
                };
                Some(reduce(raw, a.shape())?)
            } else {
                None
            };
            let gb = if needs[1] {
                let shared_b = b.rank() == 2 && a.rank() > 2 && !ta;
                let raw = if shared_b {
                    // Fold the batch into rows so the reduction over the batch
                    // happens inside one product.
                    let rows = a.numel() / a.shape()[a.rank() - 1];
                    let a2 = a.reshape(&[rows, a.shape()[a.rank() - 1]])?;
                    let g2 = g.reshape(&[rows, g.shape()[g.rank() - 1]])?;
                    if *tb {
                        g2.matmul_t(&a2, true, false)?
                    } else {
                        a2.matmul_t(&g2, true, false)?
                    }
                } else {
                    match (ta, tb) {
                        (false, false) => a.matmul_t(g, true, false)?,
                        (false, true) => g.matmul_t(a, true, false)?,
                        (true, false) => a.matmul_t(g, false, false)?,
                        (true, true) => g.matmul_t(a, true, true)?,
                    }
                };
                Some(reduce(raw, b.shape())?)
            } else {
                None
            };
            Ok(vec![ga, gb])
        }
        Op::Reshape => one(g.reshape(x.shape())?),
        Op::BroadcastTo => one(g.sum_to(x.shape())?),
        Op::SumTo => one(g.broadcast_to(x.shape())?),
        Op::Narrow { axis, start } => one(g.pad(*axis, *start, x.shape()[*axis])?),
        Op::Pad { axis, start } => one(g.narrow(*axis, *start, x.shape()[*axis])?),
        Op::Concat { axis } => {
            let mut offset = 0;
            let mut parts = Vec::with_capacity(inputs.len());
            for (input, need) in inputs.iter().zip(needs) {
                let len = input.shape()[*axis];
                parts.push(if *need { Some(g.narrow(*axis, offset, len)?) } else { None });
                offset += len;
            }
            Ok(parts)
        }
    }
}
