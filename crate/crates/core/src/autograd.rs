//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Every operator appends one node to a [`Graph`]. Nodes created from inputs
//! that require gradients carry an [`OpRecord`]: the operator name, the ids of
//! its inputs, and a [`Backward`] implementation holding whatever the operator
//! saved during the forward pass. Nodes are appended in evaluation order, so
//! the node index is already a topological order and [`Graph::backward`]
//! replays records in reverse index order, each exactly once.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::{Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Read access to the values an operator needs while computing its
/// vector-Jacobian product.
pub struct BackwardCtx<'a, T> {
    graph: &'a Graph<T>,
    inputs: &'a [Var],
    output: Var,
}

impl<'a, T: Scalar> BackwardCtx<'a, T> {
    pub fn input(&self, k: usize) -> &'a Tensor<T> {
        &self.graph.nodes[self.inputs[k].0].value
    }

    pub fn output(&self) -> &'a Tensor<T> {
        &self.graph.nodes[self.output.0].value
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn needs_grad(&self, k: usize) -> bool {
        self.graph.nodes[self.inputs[k].0].requires_grad
    }
}

/// Vector-Jacobian product of one recorded operator.
pub trait Backward<T: Scalar> {
    /// Returns one entry per input: the gradient contribution for that input,
    /// or `None` when the input does not require a gradient.
    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T]) -> Vec<Option<Vec<T>>>;
}

/// One recorded operation.
pub struct OpRecord<T> {
    pub name: &'static str,
    pub inputs: Vec<Var>,
    func: Box<dyn Backward<T>>,
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
    record: Option<OpRecord<T>>,
}

/// Tape of tensor nodes.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    training: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            training: true,
        }
    }

    /// Graph whose mode-dependent operators (batch normalization) run in
    /// evaluation mode.
    pub fn eval() -> Self {
        Graph {
            nodes: Vec::new(),
            training: false,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient on [`backward`](Self::backward).
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_leaf(value, requires_grad)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            record: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Appends the result of an operator. A record is kept only when some
    /// input requires a gradient.
    pub fn push_op(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        value: Tensor<T>,
        func: impl Backward<T> + 'static,
    ) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let record = requires_grad.then(|| OpRecord {
            name,
            inputs: inputs.to_vec(),
            func: Box::new(func),
        });
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            record,
        });
        Var(self.nodes.len() - 1)
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

    /// Gradient accumulated for `v` by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape(), g.clone()).expect("grad shape"))
    }

    /// Gradient of `v`, zeros if the node was not reached.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        self.grad(v)
            .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.shape()))
    }

    pub fn op_name(&self, v: Var) -> Option<&'static str> {
        self.nodes[v.0].record.as_ref().map(|r| r.name)
    }

    /// Number of operator records still on the tape.
    pub fn recorded_ops(&self) -> usize {
        self.nodes.iter().filter(|n| n.record.is_some()).count()
    }

    /// Back-propagates from a single-element output. Records are consumed;
    /// afterwards every node with `requires_grad` that the output depends on
    /// holds a gradient of its own shape, and the remaining ones hold zeros.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.nodes[output.0].value.numel() != 1 {
            return Err(Error::invalid(
                "backward",
                alloc::format!(
                    "output must be a scalar, has {} elements",
                    self.nodes[output.0].value.numel()
                ),
            ));
        }
        self.backward_with(output, vec![T::one()])
    }

    /// Back-propagates an explicit output cotangent.
    pub fn backward_with(&mut self, output: Var, seed: Vec<T>) -> Result<()> {
        crate::error::check_dim(
            "backward",
            "seed length",
            self.nodes[output.0].value.numel(),
            seed.len(),
        )?;
        if !self.nodes[output.0].requires_grad {
            return Ok(());
        }
        accumulate(&mut self.nodes[output.0].grad, seed);
        for idx in (0..=output.0).rev() {
            let Some(record) = self.nodes[idx].record.take() else {
                continue;
            };
            let Some(grad_out) = self.nodes[idx].grad.take() else {
                // not reached from the output
                continue;
            };
            let contributions = {
                let ctx = BackwardCtx {
                    graph: self,
                    inputs: &record.inputs,
                    output: Var(idx),
                };
                record.func.backward(&ctx, &grad_out)
            };
            debug_assert_eq!(contributions.len(), record.inputs.len(), "{}", record.name);
            for (input, contribution) in record.inputs.iter().zip(contributions) {
                if let Some(g) = contribution {
                    if self.nodes[input.0].requires_grad {
                        debug_assert_eq!(
                            g.len(),
                            self.nodes[input.0].value.numel(),
                            "{}",
                            record.name
                        );
                        accumulate(&mut self.nodes[input.0].grad, g);
                    }
                }
            }
            self.nodes[idx].grad = Some(grad_out);
        }
        for node in &mut self.nodes {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b),
        None => *slot = Some(g),
    }
}

/// Backward implementation from a closure, for operators whose saved state is
/// simple enough to capture directly.
pub(crate) struct FnBackward<F>(pub F);

impl<T: Scalar, F> Backward<T> for FnBackward<F>
where
    F: Fn(&BackwardCtx<'_, T>, &[T]) -> Vec<Option<Vec<T>>>,
{
    fn backward(&self, ctx: &BackwardCtx<'_, T>, grad_out: &[T]) -> Vec<Option<Vec<T>>> {
        (self.0)(ctx, grad_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::ones(&[2]));
        let y = g.mul(x, x).unwrap();
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn every_record_replayed_once() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        let y = g.mul(x, x).unwrap();
        let z = g.add(y, x).unwrap();
        let s = g.sum(z);
        assert_eq!(g.recorded_ops(), 3);
        g.backward(s).unwrap();
        assert_eq!(g.recorded_ops(), 0);
        // d/dx (x^2 + x) = 2x + 1
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 5.0]);
    }

    #[test]
    fn constants_do_not_record() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::ones(&[3]));
        let b = g.mul(a, a).unwrap();
        assert!(!g.requires_grad(b));
        assert_eq!(g.recorded_ops(), 0);
    }

    #[test]
    fn unreached_params_get_zero_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::ones(&[2]));
        let unused = g.param(Tensor::ones(&[3]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(unused).unwrap().data(), &[0.0; 3]);
    }
}
