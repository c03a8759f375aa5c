//! Reverse-mode tape.
//!
//! Every operation with at least one attached operand appends a node holding
//! the operand ids and whatever values its vector-Jacobian product needs.
//! Nodes are only ever appended, so operands always precede their consumers
//! and a single reverse sweep over the node list is a valid topological order.

use std::cell::RefCell;
use std::sync::Arc;

use crate::tensor::{NodeId, Result, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Silu,
    Softplus,
}

/// How the right operand of a binary op lines up with the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    Scalar,
    /// Right operand has the extent of the last axis and repeats over rows.
    LastAxis { cols: usize },
}

/// Decomposition of a tensor around one axis: `outer × len × inner`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AxisDims {
    pub outer: usize,
    pub len: usize,
    pub inner: usize,
}

impl AxisDims {
    pub fn of(shape: &[usize], axis: usize) -> Result<Self> {
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: shape.len(),
            });
        }
        Ok(Self {
            outer: shape[..axis].iter().product(),
            len: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        })
    }

    #[inline]
    pub fn index(&self, o: usize, l: usize, i: usize) -> usize {
        (o * self.len + l) * self.inner + i
    }

    #[inline]
    pub fn reduced_index(&self, o: usize, i: usize) -> usize {
        o * self.inner + i
    }
}

/// An operand value saved for the backward sweep.
pub(crate) struct Saved<T> {
    pub node: Option<NodeId>,
    pub data: Arc<Vec<T>>,
}

impl<T: Scalar> Saved<T> {
    pub fn of(t: &Tensor<T>) -> Self {
        Self {
            node: t.node(),
            data: t.shared(),
        }
    }
}

pub(crate) enum Op<T> {
    Leaf,
    MatMul {
        a: Saved<T>,
        b: Saved<T>,
        m: usize,
        k: usize,
        n: usize,
    },
    Binary {
        kind: BinaryKind,
        a: Saved<T>,
        b: Saved<T>,
        bcast: Broadcast,
    },
    Scale {
        x: NodeId,
        c: T,
    },
    Shift {
        x: NodeId,
    },
    Activation {
        kind: Activation,
        x: NodeId,
        input: Arc<Vec<T>>,
    },
    Softmax {
        x: NodeId,
        out: Arc<Vec<T>>,
        cols: usize,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
        dims: AxisDims,
    },
    Std {
        x: NodeId,
        dims: AxisDims,
        input: Arc<Vec<T>>,
        mean: Vec<T>,
        std: Vec<T>,
        floored: Vec<bool>,
    },
    Transpose {
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Concat {
        parts: Vec<(Option<NodeId>, usize)>,
        outer: usize,
    },
    Gather {
        table: NodeId,
        indices: Vec<usize>,
        row_len: usize,
    },
    Reshape {
        x: NodeId,
    },
    BceWithLogits {
        x: NodeId,
        logit: T,
        target: T,
    },
}

pub(crate) struct Node<T> {
    pub op: Op<T>,
    pub numel: usize,
}

/// Append-only record of differentiable operations.
///
/// A tape belongs to one thread of computation; build a fresh one per
/// forward pass and drop it after [`Tape::backward`].
pub struct Tape<T: Scalar = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Attaches a copy of `t` as a new leaf (a parameter or differentiable input).
    pub fn leaf(&self, t: &Tensor<T>) -> Tensor<T> {
        let id = self.push(Op::Leaf, t.numel());
        t.detach().with_node(Some(id))
    }

    pub(crate) fn push(&self, op: Op<T>, numel: usize) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, numel });
        NodeId(nodes.len() - 1)
    }

    /// Wraps a forward result, recording `op` only when some operand is attached.
    pub(crate) fn output(
        &self,
        shape: Vec<usize>,
        data: Vec<T>,
        attached: bool,
        op: impl FnOnce() -> Op<T>,
    ) -> Tensor<T> {
        let node = attached.then(|| self.push(op(), data.len()));
        Tensor::from_parts(shape, data, node)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<Gradients<T>> {
        if loss.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss.shape().to_vec()));
        }
        let root = loss.node().ok_or(TensorError::DetachedLoss)?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            propagate(&nodes[idx].op, &g, &nodes, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of one loss with respect to every node on a tape.
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for an attached tensor; `None` if the loss never reached it.
    pub fn get(&self, t: &Tensor<T>) -> Option<Tensor<T>> {
        let id = t.node()?;
        let g = self.grads.get(id.0)?.as_ref()?;
        Some(Tensor::from_parts(t.shape().to_vec(), g.clone(), None))
    }

    /// Gradient for `t`, zeros when untouched or detached.
    pub fn wrt(&self, t: &Tensor<T>) -> Tensor<T> {
        self.get(t).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
    }

    pub fn by_node(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0)?.as_deref()
    }
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    id: NodeId,
    f: impl FnOnce(&mut [T]),
) {
    let slot = grads[id.0].get_or_insert_with(|| vec![T::zero(); nodes[id.0].numel]);
    f(slot);
}

fn propagate<T: Scalar>(op: &Op<T>, g: &[T], nodes: &[Node<T>], grads: &mut [Option<Vec<T>>]) {
    match op {
        Op::Leaf => {}
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if let Some(id) = a.node {
                // dA = dC · Bᵀ
                accumulate(grads, nodes, id, |da| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &b.data[p * n..(p + 1) * n];
                            let mut acc = T::zero();
                            for j in 0..n {
                                acc = acc + grow[j] * brow[j];
                            }
                            da[i * k + p] = da[i * k + p] + acc;
                        }
                    }
                });
            }
            if let Some(id) = b.node {
                // dB = Aᵀ · dC
                accumulate(grads, nodes, id, |db| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = a.data[i * k + p];
                            let drow = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                drow[j] = drow[j] + av * grow[j];
                            }
                        }
                    }
                });
            }
        }
        Op::Binary { kind, a, b, bcast } => {
            let bidx = |i: usize| match bcast {
                Broadcast::Same => i,
                Broadcast::Scalar => 0,
                Broadcast::LastAxis { cols } => i % cols,
            };
            if let Some(id) = a.node {
                accumulate(grads, nodes, id, |da| {
                    for (i, gi) in g.iter().enumerate() {
                        let d = match kind {
                            BinaryKind::Add | BinaryKind::Sub => *gi,
                            BinaryKind::Mul => *gi * b.data[bidx(i)],
                            BinaryKind::Div => *gi / b.data[bidx(i)],
                        };
                        da[i] = da[i] + d;
                    }
                });
            }
            if let Some(id) = b.node {
                accumulate(grads, nodes, id, |db| {
                    for (i, gi) in g.iter().enumerate() {
                        let j = bidx(i);
                        let d = match kind {
                            BinaryKind::Add => *gi,
                            BinaryKind::Sub => -*gi,
                            BinaryKind::Mul => *gi * a.data[i],
                            BinaryKind::Div => {
                                let bv = b.data[j];
                                -*gi * a.data[i] / (bv * bv)
                            }
                        };
                        db[j] = db[j] + d;
                    }
                });
            }
        }
        Op::Scale { x, c } => accumulate(grads, nodes, *x, |dx| {
            for (d, gi) in dx.iter_mut().zip(g) {
                *d = *d + *gi * *c;
            }
        }),
        Op::Shift { x } | Op::Reshape { x } => accumulate(grads, nodes, *x, |dx| {
            for (d, gi) in dx.iter_mut().zip(g) {
                *d = *d + *gi;
            }
        }),
        Op::Activation { kind, x, input } => accumulate(grads, nodes, *x, |dx| {
            for ((d, gi), xi) in dx.iter_mut().zip(g).zip(input.iter()) {
                *d = *d + *gi * activation_derivative(*kind, *xi);
            }
        }),
        Op::Softmax { x, out, cols } => accumulate(grads, nodes, *x, |dx| {
            for (r, (grow, yrow)) in g.chunks(*cols).zip(out.chunks(*cols)).enumerate() {
                let dot: T = grow.iter().zip(yrow).map(|(a, b)| *a * *b).sum();
                for c in 0..*cols {
                    let i = r * cols + c;
                    dx[i] = dx[i] + yrow[c] * (grow[c] - dot);
                }
            }
        }),
        Op::Sum { x } => accumulate(grads, nodes, *x, |dx| {
            for d in dx.iter_mut() {
                *d = *d + g[0];
            }
        }),
        Op::Mean { x, dims } => accumulate(grads, nodes, *x, |dx| {
            let inv = T::one() / T::of(dims.len as f64);
            for o in 0..dims.outer {
                for l in 0..dims.len {
                    for i in 0..dims.inner {
                        let k = dims.index(o, l, i);
                        dx[k] = dx[k] + g[dims.reduced_index(o, i)] * inv;
                    }
                }
            }
        }),
        Op::Std {
            x,
            dims,
            input,
            mean,
            std,
            floored,
        } => accumulate(grads, nodes, *x, |dx| {
            let n = T::of(dims.len as f64);
            for o in 0..dims.outer {
                for i in 0..dims.inner {
                    let r = dims.reduced_index(o, i);
                    if floored[r] {
                        continue;
                    }
                    let scale = g[r] / (n * std[r]);
                    for l in 0..dims.len {
                        let k = dims.index(o, l, i);
                        dx[k] = dx[k] + scale * (input[k] - mean[r]);
                    }
                }
            }
        }),
        Op::Transpose { x, rows, cols } => accumulate(grads, nodes, *x, |dx| {
            // forward: out[c, r] = x[r, c]
            for r in 0..*rows {
                for c in 0..*cols {
                    dx[r * cols + c] = dx[r * cols + c] + g[c * rows + r];
                }
            }
        }),
        Op::Concat { parts, outer } => {
            let total: usize = parts.iter().map(|(_, w)| w).sum();
            let mut offset = 0;
            for (node, width) in parts {
                if let Some(id) = node {
                    accumulate(grads, nodes, *id, |dx| {
                        for o in 0..*outer {
                            let src = &g[o * total + offset..o * total + offset + width];
                            let dst = &mut dx[o * width..(o + 1) * width];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = *d + *s;
                            }
                        }
                    });
                }
                offset += width;
            }
        }
        Op::Gather {
            table,
            indices,
            row_len,
        } => accumulate(grads, nodes, *table, |dt| {
            for (r, &idx) in indices.iter().enumerate() {
                let src = &g[r * row_len..(r + 1) * row_len];
                let dst = &mut dt[idx * row_len..(idx + 1) * row_len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + *s;
                }
            }
        }),
        Op::BceWithLogits { x, logit, target } => accumulate(grads, nodes, *x, |dx| {
            dx[0] = dx[0] + g[0] * (crate::ops::sigmoid(*logit) - *target);
        }),
    }
}

fn activation_derivative<T: Scalar>(kind: Activation, x: T) -> T {
    let s = crate::ops::sigmoid(x);
    match kind {
        Activation::Sigmoid => s * (T::one() - s),
        Activation::Silu => s * (T::one() + x * (T::one() - s)),
        Activation::Softplus => s,
    }
}
