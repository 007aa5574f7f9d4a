//! Dense `f32` tensors with define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation whose inputs require gradients. Tensors
//! created without a tape are constants: operations on them are evaluated
//! eagerly and never recorded. The tape is meant to be rebuilt for every
//! training step.

mod conv;
mod elementwise;
mod matmul;
mod norm;
mod reduce;
mod shape_ops;
mod tape;

use std::sync::Arc;

pub use elementwise::ElemOp;
pub use tape::{NodeId, Tape};

use crate::error::{Error, Result};

/// Backward rule of a recorded operation: receives the gradient of the
/// output and a mask of which inputs need gradients, returns one optional
/// gradient per input.
pub(crate) type BackwardFn = Box<dyn Fn(&[f32], &[bool]) -> Vec<Option<Vec<f32>>>>;

#[derive(Clone)]
pub(crate) struct Node {
    tape: Tape,
    id: NodeId,
}

/// A row-major tensor of `f32` values, optionally attached to a [`Tape`].
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    node: Option<Node>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Constant tensor. Panics if `data.len()` does not match the shape.
    pub fn new(data: Vec<f32>, shape: &[usize]) -> Self {
        Self::from_arc(Arc::new(data), shape)
    }

    pub fn from_arc(data: Arc<Vec<f32>>, shape: &[usize]) -> Self {
        assert_eq!(
            data.len(),
            numel(shape),
            "data length does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
            node: None,
        }
    }

    pub fn try_new(data: Vec<f32>, shape: &[usize]) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(Error::dim("tensor", &[data.len()], shape));
        }
        Ok(Self::new(data, shape))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(vec![0.0; numel(shape)], shape)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        Self::new(vec![value; numel(shape)], shape)
    }

    pub fn scalar(value: f32) -> Self {
        Self::new(vec![value], &[])
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> &Arc<Vec<f32>> {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.data.as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn node_id(&self) -> Option<NodeId> {
        self.node.as_ref().map(|n| n.id)
    }

    pub(crate) fn tape(&self) -> Option<&Tape> {
        self.node.as_ref().map(|n| &n.tape)
    }

    /// Accumulated gradient, if this tensor is a leaf that has received one.
    pub fn grad(&self) -> Option<Vec<f32>> {
        let node = self.node.as_ref()?;
        node.tape.grad_of(node.id)
    }

    /// Copy of this tensor detached from any tape.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            node: None,
        }
    }

    pub(crate) fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    /// Builds the result of an operation, recording it on the tape shared by
    /// the inputs when any of them requires gradients.
    pub(crate) fn record(
        data: Vec<f32>,
        shape: &[usize],
        inputs: &[&Tensor],
        backward: impl Fn(&[f32], &[bool]) -> Vec<Option<Vec<f32>>> + 'static,
    ) -> Tensor {
        Self::record_shared(Arc::new(data), shape, inputs, backward)
    }

    pub(crate) fn record_shared(
        data: Arc<Vec<f32>>,
        shape: &[usize],
        inputs: &[&Tensor],
        backward: impl Fn(&[f32], &[bool]) -> Vec<Option<Vec<f32>>> + 'static,
    ) -> Tensor {
        debug_assert_eq!(data.len(), numel(shape));
        let tape = inputs.iter().find_map(|t| t.tape().cloned());
        match tape {
            None => Tensor::from_arc(data, shape),
            Some(tape) => {
                let ids: Vec<Option<NodeId>> = inputs
                    .iter()
                    .map(|t| {
                        t.node.as_ref().map(|n| {
                            assert!(
                                n.tape.same_as(&tape),
                                "operation mixes tensors from different tapes"
                            );
                            n.id
                        })
                    })
                    .collect();
                let id = tape.push_op(ids, Box::new(backward));
                Tensor {
                    shape: shape.to_vec(),
                    data,
                    node: Some(Node { tape, id }),
                }
            }
        }
    }

    pub(crate) fn with_node(self, tape: &Tape, id: NodeId) -> Tensor {
        Tensor {
            node: Some(Node {
                tape: tape.clone(),
                id,
            }),
            ..self
        }
    }
}

pub use conv::{conv1d, conv_transpose1d};
pub use elementwise::elementwise;
pub use matmul::matmul;
pub use norm::{group_norm, layer_norm};
pub use reduce::softmax;
pub use shape_ops::{concat, embedding};

#[cfg(test)]
mod tests;
