use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    /// Position in the tape; records only ever reference smaller indices.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradient rule of one recorded operation.
///
/// Implementations hold whatever intermediates the forward pass saved. `needs[i]`
/// is false when input `i` does not require a gradient; the rule may return `None`
/// for it.
pub trait Backward<T: Scalar> {
    fn op_name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    op_name: &'static str,
    backward: Option<Box<dyn Backward<T>>>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Read-only view of one tape entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputationRecord {
    pub op: &'static str,
    pub inputs: Vec<Var>,
    pub order: usize,
    pub requires_grad: bool,
}

/// Append-only record of a computation. Entries are stored in creation order,
/// which is a topological order of the (acyclic) dependency graph.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            op_name: "leaf",
            backward: None,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Append the result of an operation. The record keeps its gradient rule only if
    /// some input requires a gradient.
    pub fn record(
        &mut self,
        value: Tensor<T>,
        inputs: Vec<Var>,
        backward: Box<dyn Backward<T>>,
    ) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op_name = backward.op_name();
        self.nodes.push(Node {
            value,
            inputs,
            op_name,
            backward: requires_grad.then_some(backward),
            requires_grad,
            grad: None,
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

    /// Accumulated gradient; absent for values that do not require one or were not
    /// reached by any backward pass.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn record_of(&self, v: Var) -> ComputationRecord {
        let node = &self.nodes[v.0];
        ComputationRecord {
            op: node.op_name,
            inputs: node.inputs.clone(),
            order: v.0,
            requires_grad: node.requires_grad,
        }
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Propagate d(loss)/d(·) to every value that requires a gradient. Repeated calls
    /// accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss).to_vec();
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        self.backward_with_seed(loss, Tensor::ones(&shape))
    }

    /// Vector-Jacobian product: propagate `seed` (same shape as `output`) backwards.
    pub fn backward_with_seed(&mut self, output: Var, seed: Tensor<T>) -> Result<()> {
        if seed.shape() != self.shape(output) {
            return Err(Error::shape("backward", seed.shape(), self.shape(output)));
        }
        if !self.nodes[output.0].requires_grad {
            return Ok(());
        }
        let mut pending: Vec<Option<Tensor<T>>> = (0..=output.0).map(|_| None).collect();
        pending[output.0] = Some(seed);

        for i in (0..=output.0).rev() {
            let Some(grad) = pending[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if let Some(rule) = &node.backward {
                let inputs: Vec<&Tensor<T>> =
                    node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                let needs: Vec<bool> = node
                    .inputs
                    .iter()
                    .map(|v| self.nodes[v.0].requires_grad)
                    .collect();
                let input_grads = rule.backward(&inputs, &node.value, &grad, &needs);
                debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.op_name);
                for ((v, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                    let (Some(g), true) = (g, need) else { continue };
                    debug_assert_eq!(
                        g.shape(),
                        self.nodes[v.0].value.shape(),
                        "{} gradient shape",
                        node.op_name
                    );
                    match &mut pending[v.0] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                }
            }
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&grad),
                slot => *slot = Some(grad),
            }
        }
        Ok(())
    }
}
