use std::cell::RefCell;
use std::rc::Rc;

use super::{BackwardFn, Tensor};
use crate::error::{Error, Result};

pub type NodeId = usize;

struct OpRecord {
    inputs: Vec<Option<NodeId>>,
    output: NodeId,
    backward: BackwardFn,
}

struct NodeMeta {
    leaf: bool,
}

#[derive(Default)]
struct TapeState {
    nodes: Vec<NodeMeta>,
    // Creation order is a topological order: inputs always exist before the
    // operation that consumes them.
    ops: Vec<OpRecord>,
    leaf_grads: Vec<Option<Vec<f32>>>,
}

/// Ordered record of differentiable operations.
#[derive(Clone, Default)]
pub struct Tape(Rc<RefCell<TapeState>>);

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn same_as(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn push_node(&self, leaf: bool) -> NodeId {
        let mut st = self.0.borrow_mut();
        st.nodes.push(NodeMeta { leaf });
        st.leaf_grads.push(None);
        st.nodes.len() - 1
    }

    pub(crate) fn push_op(
        &self,
        inputs: Vec<Option<NodeId>>,
        backward: BackwardFn,
    ) -> NodeId {
        let output = self.push_node(false);
        self.0.borrow_mut().ops.push(OpRecord {
            inputs,
            output,
            backward,
        });
        output
    }

    /// Registers a leaf tensor that requires gradients.
    pub fn leaf(&self, data: Vec<f32>, shape: &[usize]) -> Tensor {
        self.watch(&Tensor::new(data, shape))
    }

    /// Registers an existing tensor's values as a new leaf on this tape.
    pub fn watch(&self, t: &Tensor) -> Tensor {
        let id = self.push_node(true);
        t.detach().with_node(self, id)
    }

    pub fn num_nodes(&self) -> usize {
        self.0.borrow().nodes.len()
    }

    pub fn num_ops(&self) -> usize {
        self.0.borrow().ops.len()
    }

    pub(crate) fn grad_of(&self, id: NodeId) -> Option<Vec<f32>> {
        self.0.borrow().leaf_grads.get(id).cloned().flatten()
    }

    /// Clears every accumulated leaf gradient.
    pub fn zero_grad(&self) {
        for g in self.0.borrow_mut().leaf_grads.iter_mut() {
            *g = None;
        }
    }

    /// Propagates d`loss` back to every leaf on the tape. Gradients from
    /// repeated calls accumulate.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let id = match &loss.node {
            Some(n) if n.tape.same_as(self) => n.id,
            _ => {
                return Err(Error::Contract(
                    "loss is not recorded on this tape".to_string(),
                ))
            }
        };
        let mut st = self.0.borrow_mut();
        let mut work: Vec<Option<Vec<f32>>> = (0..st.nodes.len()).map(|_| None).collect();
        work[id] = Some(vec![1.0]);

        for op in st.ops.iter().rev() {
            let Some(g) = work[op.output].take() else {
                continue;
            };
            let needs: Vec<bool> = op.inputs.iter().map(|i| i.is_some()).collect();
            let grads = (op.backward)(&g, &needs);
            debug_assert_eq!(grads.len(), op.inputs.len());
            for (input, grad) in op.inputs.iter().zip(grads) {
                let (Some(input), Some(grad)) = (input, grad) else {
                    continue;
                };
                match &mut work[*input] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&grad) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(grad),
                }
            }
        }

        let TapeState {
            nodes, leaf_grads, ..
        } = &mut *st;
        for (i, w) in work.into_iter().enumerate() {
            if !nodes[i].leaf {
                continue;
            }
            // Leaves the loss does not depend on keep no gradient.
            let Some(w) = w else { continue };
            match &mut leaf_grads[i] {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&w) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(w),
            }
        }
        Ok(())
    }
}
