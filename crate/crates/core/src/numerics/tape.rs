use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;

use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// Vector-Jacobian product of one recorded primitive.
///
/// Implementors hold the ids of their inputs plus whatever forward values
/// they saved; `backward` pushes `out_grad` into the inputs that want it.
pub trait Backward {
    fn backward(&self, out_grad: &[f64], out_value: &[f64], ctx: &mut GradCtx<'_>);
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Option<Box<dyn Backward>>,
}

/// Gradient tape: an append-only list of primitive applications.
///
/// Nodes are pushed in evaluation order, so the list is already a
/// topological order and the backward sweep is a single reverse pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Accumulation context handed to [`Backward::backward`].
pub struct GradCtx<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
}

impl<'a> GradCtx<'a> {
    pub fn value(&self, id: usize) -> &'a [f64] {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: usize) -> &'a [usize] {
        &self.nodes[id].shape
    }

    pub fn wants(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    /// Gradient buffer of node `id`, zero-initialised on first use.
    pub fn grad(&mut self, id: usize) -> &mut [f64] {
        let len = self.nodes[id].value.len();
        self.grads[id].get_or_insert_with(|| vec![0.0; len])
    }

    /// Adds `g` into the gradient of `id` if that node wants one.
    pub fn accumulate(&mut self, id: usize, g: &[f64]) {
        if self.wants(id) {
            for (d, s) in self.grad(id).iter_mut().zip(g) {
                *d += s;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a constant (no gradient).
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.leaf(t, false)
    }

    /// Records a trainable leaf.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.leaf(t, true)
    }

    pub fn leaf(&self, t: Tensor, requires_grad: bool) -> Var<'_> {
        let shape = t.shape().to_vec();
        self.push_node(Node {
            shape,
            value: t.into_data(),
            requires_grad,
            op: None,
        })
    }

    fn push_node(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records the output of a primitive.
    ///
    /// `requires_grad` should be true iff any input requires a gradient;
    /// when false the backward closure is dropped immediately.
    pub fn push(
        &self,
        shape: Vec<usize>,
        value: Vec<f64>,
        requires_grad: bool,
        op: impl Backward + 'static,
    ) -> Var<'_> {
        debug_assert_eq!(numel(&shape), value.len());
        let op: Option<Box<dyn Backward>> = if requires_grad {
            Some(Box::new(op))
        } else {
            None
        };
        self.push_node(Node {
            shape,
            value,
            requires_grad,
            op,
        })
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Returns gradients of every leaf marked as requiring one. Intermediate
    /// gradient buffers are dropped as soon as they have been propagated.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Graph("loss belongs to a different tape".into()));
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape
            )));
        }
        if !root.requires_grad {
            return Err(Error::Graph(
                "loss is detached: it depends on no trainable leaf".into(),
            ));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        let mut leaves = HashMap::new();

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            match &node.op {
                Some(op) => {
                    let mut ctx = GradCtx {
                        nodes: &nodes[..],
                        grads: &mut grads[..],
                    };
                    op.backward(&g, &node.value, &mut ctx);
                }
                None => {
                    if node.requires_grad {
                        leaves.insert(id, Tensor::new(node.shape.clone(), g)?);
                    }
                }
            }
        }
        Ok(Gradients { leaves })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: HashMap<usize, Tensor>,
}

impl Gradients {
    /// Gradient of `var`, or `None` if the loss does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.leaves.get(&var.id)
    }

    /// Gradient of `var`, zero-filled when the loss does not reach it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Runs `f` on the node's value without copying it.
    pub fn with_value<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape invariant")
    }

    pub fn item(&self) -> f64 {
        self.with_value(|v| v[0])
    }
}
