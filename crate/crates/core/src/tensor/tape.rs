use std::rc::Rc;

use super::{Real, Result, Tensor, TensorError};

/// A value produced on a [`Tape`]. Cheap to clone.
///
/// Untracked vars (constants, or results computed only from constants) carry
/// no tape node and are freed as soon as the last handle drops.
#[derive(Clone)]
pub struct Var<T: Real = f32> {
    pub(crate) value: Rc<Tensor<T>>,
    pub(crate) node: Option<usize>,
}

impl<T: Real> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("node", &self.node).field("value", &self.value).finish()
    }
}

impl<T: Real> Var<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }
}

/// What a recorded op sees when its gradient is requested.
pub struct BackwardCtx<'a, T: Real> {
    pub inputs: &'a [&'a Tensor<T>],
    pub output: &'a Tensor<T>,
    pub grad_output: &'a [T],
    /// `needs_grad[i]` is false for inputs that do not lead to a tracked leaf;
    /// ops may return `None` for those.
    pub needs_grad: &'a [bool],
}

/// The vector-Jacobian product of a recorded op.
pub trait Backward<T: Real> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>>;
}

struct Node<T: Real> {
    inputs: Vec<(Rc<Tensor<T>>, Option<usize>)>,
    output: Rc<Tensor<T>>,
    op: Option<Box<dyn Backward<T>>>,
    /// Accumulated gradient; only leaves keep one.
    grad: Option<Vec<T>>,
}

/// Records tracked ops in creation order, which is a valid topological order.
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Registers a leaf that receives a gradient on [`Tape::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var<T> {
        let value = Rc::new(value);
        self.nodes.push(Node { inputs: Vec::new(), output: value.clone(), op: None, grad: None });
        Var { value, node: Some(self.nodes.len() - 1) }
    }

    /// Wraps a value that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<T> {
        Var { value: Rc::new(value), node: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records `output = op(inputs)`. The result is tracked iff any input is.
    pub fn record(
        &mut self,
        inputs: &[&Var<T>],
        output: Tensor<T>,
        op: impl Backward<T> + 'static,
    ) -> Var<T> {
        debug_assert!(
            output.all_finite() || inputs.iter().any(|v| !v.value.all_finite()),
            "op produced non-finite values from finite inputs"
        );
        let value = Rc::new(output);
        if inputs.iter().all(|v| v.node.is_none()) {
            return Var { value, node: None };
        }
        self.nodes.push(Node {
            inputs: inputs.iter().map(|v| (v.value.clone(), v.node)).collect(),
            output: value.clone(),
            op: Some(Box::new(op)),
            grad: None,
        });
        Var { value, node: Some(self.nodes.len() - 1) }
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, var: &Var<T>) -> Option<&[T]> {
        var.node.and_then(|i| self.nodes[i].grad.as_deref())
    }

    /// Gradient of a leaf as a tensor shaped like the leaf (zeros if unreached).
    pub fn grad_tensor(&self, var: &Var<T>) -> Tensor<T> {
        match self.grad(var) {
            Some(g) => Tensor::new(var.shape().to_vec(), g.to_vec()).expect("grad shape"),
            None => Tensor::zeros(var.shape().to_vec()),
        }
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Back-propagates from a scalar loss, adding `d loss / d leaf` into every
    /// tracked leaf's gradient buffer.
    pub fn backward(&mut self, loss: &Var<T>) -> Result<()> {
        if loss.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss.shape().to_vec()));
        }
        let root = loss.node.ok_or(TensorError::Untracked)?;
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(root + 1, || None);
        grads[root] = Some(vec![T::one()]);

        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &mut self.nodes[i];
            let Some(op) = &node.op else {
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                    None => node.grad = Some(g),
                }
                continue;
            };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|(t, _)| t.as_ref()).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|(_, n)| n.is_some()).collect();
            let ctx = BackwardCtx {
                inputs: &inputs,
                output: &node.output,
                grad_output: &g,
                needs_grad: &needs,
            };
            let input_grads = op.backward(&ctx);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (ig, (t, parent)) in input_grads.into_iter().zip(&node.inputs) {
                let (Some(ig), Some(p)) = (ig, *parent) else { continue };
                debug_assert_eq!(ig.len(), t.len(), "gradient length must match input");
                match &mut grads[p] {
                    Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a = *a + *b),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(())
    }
}
