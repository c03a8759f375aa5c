//! Forward operations. Each one records itself on the tape when any operand
//! is attached and returns a detached result otherwise.

use std::sync::Arc;

use crate::tape::{Activation, AxisDims, BinaryKind, Broadcast, Op, Saved, Tape};
use crate::tensor::{Result, Scalar, Tensor, TensorError};

/// Divisors smaller than this in magnitude are rejected by [`Tape::div`].
pub const DIV_EPS: f64 = 1e-12;
/// Floor applied to standard deviations from [`Tape::reduce_stats`].
pub const STD_FLOOR: f64 = 1e-6;
const SATURATION: f64 = 30.0;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

pub fn softplus<T: Scalar>(x: T) -> T {
    let sat = T::of(SATURATION);
    if x > sat {
        x
    } else if x < -sat {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `max(o, 0) − o·t + ln(1 + e^(−|o|))`.
pub fn bce_with_logits_value<T: Scalar>(logit: T, target: T) -> T {
    logit.max(T::zero()) - logit * target + (-logit.abs()).exp().ln_1p()
}

fn apply<T: Scalar>(kind: Activation, x: T) -> T {
    match kind {
        Activation::Sigmoid => sigmoid(x),
        Activation::Silu => silu(x),
        Activation::Softplus => softplus(x),
    }
}

fn broadcast_of(a: &[usize], b: &[usize], op: &'static str) -> Result<Broadcast> {
    let an: usize = a.iter().product();
    let bn: usize = b.iter().product();
    if a == b {
        return Ok(Broadcast::Same);
    }
    if bn == 1 {
        return Ok(Broadcast::Scalar);
    }
    let last = *a.last().unwrap_or(&0);
    let b_is_row = b.last() == Some(&last) && bn == last;
    if b_is_row && an % last == 0 {
        return Ok(Broadcast::LastAxis { cols: last });
    }
    Err(TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    })
}

impl<T: Scalar> Tape<T> {
    /// Matrix product of `[m, k] × [k, n]`.
    pub fn matmul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = a.dims2()?;
        let (k2, n) = b.dims2()?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (av, bv) = (a.values(), b.values());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                for (o, bj) in orow.iter_mut().zip(brow) {
                    *o = *o + x * *bj;
                }
            }
        }
        let attached = a.is_attached() || b.is_attached();
        Ok(self.output(vec![m, n], out, attached, || Op::MatMul {
            a: Saved::of(a),
            b: Saved::of(b),
            m,
            k,
            n,
        }))
    }

    fn binary(&self, kind: BinaryKind, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let bcast = broadcast_of(a.shape(), b.shape(), name)?;
        let (av, bv) = (a.values(), b.values());
        if kind == BinaryKind::Div {
            if let Some(bad) = bv.iter().find(|v| v.abs() < T::of(DIV_EPS)) {
                return Err(TensorError::NumericDomain {
                    op: "div",
                    reason: format!("divisor {bad} has magnitude below {DIV_EPS:e}"),
                });
            }
        }
        let bidx = |i: usize| match bcast {
            Broadcast::Same => i,
            Broadcast::Scalar => 0,
            Broadcast::LastAxis { cols } => i % cols,
        };
        let out: Vec<T> = av
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bv[bidx(i)];
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        let attached = a.is_attached() || b.is_attached();
        Ok(self.output(a.shape().to_vec(), out, attached, || Op::Binary {
            kind,
            a: Saved::of(a),
            b: Saved::of(b),
            bcast,
        }))
    }

    /// `a + b`; `b` may be a scalar or a row broadcast along the last axis.
    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryKind::Mul, a, b)
    }

    /// Errors with [`TensorError::NumericDomain`] if any divisor is near zero.
    pub fn div(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryKind::Div, a, b)
    }

    /// Multiplies by a constant.
    pub fn scale(&self, x: &Tensor<T>, c: T) -> Tensor<T> {
        let out = x.values().iter().map(|&v| v * c).collect();
        let id = x.node();
        self.output(x.shape().to_vec(), out, id.is_some(), || Op::Scale {
            x: id.expect("attached"),
            c,
        })
    }

    /// Adds a constant.
    pub fn shift(&self, x: &Tensor<T>, c: T) -> Tensor<T> {
        let out = x.values().iter().map(|&v| v + c).collect();
        let id = x.node();
        self.output(x.shape().to_vec(), out, id.is_some(), || Op::Shift {
            x: id.expect("attached"),
        })
    }

    pub fn activation(&self, kind: Activation, x: &Tensor<T>) -> Tensor<T> {
        let out = x.values().iter().map(|&v| apply(kind, v)).collect();
        let id = x.node();
        self.output(x.shape().to_vec(), out, id.is_some(), || Op::Activation {
            kind,
            x: id.expect("attached"),
            input: x.shared(),
        })
    }

    pub fn sigmoid(&self, x: &Tensor<T>) -> Tensor<T> {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn silu(&self, x: &Tensor<T>) -> Tensor<T> {
        self.activation(Activation::Silu, x)
    }

    pub fn softplus(&self, x: &Tensor<T>) -> Tensor<T> {
        self.activation(Activation::Softplus, x)
    }

    /// Softmax over the last axis.
    pub fn softmax(&self, x: &Tensor<T>) -> Tensor<T> {
        let cols = *x.shape().last().expect("rank >= 1");
        let mut out = Vec::with_capacity(x.numel());
        for row in x.values().chunks(cols) {
            let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let exps: Vec<T> = row.iter().map(|&v| (v - mx).exp()).collect();
            let z: T = exps.iter().copied().sum();
            out.extend(exps.into_iter().map(|e| e / z));
        }
        let out = Arc::new(out);
        let id = x.node();
        let node = id.map(|x| {
            self.push(
                Op::Softmax {
                    x,
                    out: Arc::clone(&out),
                    cols,
                },
                out.len(),
            )
        });
        let data = Arc::try_unwrap(out).unwrap_or_else(|a| (*a).clone());
        Tensor::from_parts(x.shape().to_vec(), data, node)
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&self, x: &Tensor<T>) -> Tensor<T> {
        let s: T = x.values().iter().copied().sum();
        let id = x.node();
        self.output(vec![1], vec![s], id.is_some(), || Op::Sum {
            x: id.expect("attached"),
        })
    }

    /// Mean along `axis`, keeping the axis with extent 1.
    pub fn mean_axis(&self, x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
        let dims = AxisDims::of(x.shape(), axis)?;
        let mean = axis_mean(x.values(), dims);
        let mut shape = x.shape().to_vec();
        shape[axis] = 1;
        let id = x.node();
        Ok(self.output(shape, mean, id.is_some(), || Op::Mean {
            x: id.expect("attached"),
            dims,
        }))
    }

    /// Population mean and standard deviation along `axis` (divide by n).
    /// The deviation is floored at [`STD_FLOOR`]; floored entries pass no gradient.
    pub fn reduce_stats(&self, x: &Tensor<T>, axis: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        let dims = AxisDims::of(x.shape(), axis)?;
        let mean_t = self.mean_axis(x, axis)?;
        let mean = mean_t.values().to_vec();
        let xs = x.values();
        let n = T::of(dims.len as f64);
        let floor = T::of(STD_FLOOR);
        let mut std = vec![T::zero(); dims.outer * dims.inner];
        let mut floored = vec![false; std.len()];
        for o in 0..dims.outer {
            for i in 0..dims.inner {
                let r = dims.reduced_index(o, i);
                let mut ss = T::zero();
                for l in 0..dims.len {
                    let d = xs[dims.index(o, l, i)] - mean[r];
                    ss = ss + d * d;
                }
                let s = (ss / n).sqrt();
                if s < floor {
                    std[r] = floor;
                    floored[r] = true;
                } else {
                    std[r] = s;
                }
            }
        }
        let shape = mean_t.shape().to_vec();
        let id = x.node();
        let saved_std = std.clone();
        let std_t = self.output(shape, std, id.is_some(), || Op::Std {
            x: id.expect("attached"),
            dims,
            input: x.shared(),
            mean,
            std: saved_std,
            floored,
        });
        Ok((mean_t, std_t))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, cols) = x.dims2()?;
        let xs = x.values();
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = xs[r * cols + c];
            }
        }
        let id = x.node();
        Ok(self.output(vec![cols, rows], out, id.is_some(), || Op::Transpose {
            x: id.expect("attached"),
            rows,
            cols,
        }))
    }

    /// Concatenates tensors along `axis`; all other extents must agree.
    pub fn concat(&self, parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| TensorError::InvalidShape {
            shape: vec![],
            reason: "concat of zero tensors".into(),
        })?;
        let rank = first.rank();
        let mut shape = first.shape().to_vec();
        AxisDims::of(&shape, axis)?;
        shape[axis] = 0;
        for p in parts {
            let ok = p.rank() == rank
                && (0..rank).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            shape[axis] += p.shape()[axis];
        }
        let outer: usize = shape[..axis].iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| p.numel() / outer).collect();
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.values()[o * w..(o + 1) * w]);
            }
        }
        let attached = parts.iter().any(|p| p.is_attached());
        Ok(self.output(shape, out, attached, || Op::Concat {
            parts: parts.iter().zip(&widths).map(|(p, &w)| (p.node(), w)).collect(),
            outer,
        }))
    }

    /// Selects rows (first-axis slices) of `table`; the embedding lookup.
    pub fn gather_rows(&self, table: &Tensor<T>, indices: &[usize]) -> Result<Tensor<T>> {
        let extent = table.shape()[0];
        let row_len = table.numel() / extent;
        if indices.is_empty() {
            return Err(TensorError::InvalidShape {
                shape: vec![0],
                reason: "gather of zero rows".into(),
            });
        }
        let mut out = Vec::with_capacity(indices.len() * row_len);
        for &i in indices {
            if i >= extent {
                return Err(TensorError::IndexOutOfRange { index: i, extent });
            }
            out.extend_from_slice(&table.values()[i * row_len..(i + 1) * row_len]);
        }
        let mut shape = table.shape().to_vec();
        shape[0] = indices.len();
        let id = table.node();
        Ok(self.output(shape, out, id.is_some(), || Op::Gather {
            table: id.expect("attached"),
            indices: indices.to_vec(),
            row_len,
        }))
    }

    pub fn reshape(&self, x: &Tensor<T>, shape: impl Into<Vec<usize>>) -> Result<Tensor<T>> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != x.numel() || shape.contains(&0) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: x.shape().to_vec(),
                rhs: shape,
            });
        }
        let id = x.node();
        Ok(self.output(shape, x.values().to_vec(), id.is_some(), || Op::Reshape {
            x: id.expect("attached"),
        }))
    }

    /// Binary cross-entropy on a single logit in the stable log-sum-exp form.
    pub fn bce_with_logits(&self, logit: &Tensor<T>, target: T) -> Result<Tensor<T>> {
        if logit.numel() != 1 {
            return Err(TensorError::InvalidShape {
                shape: logit.shape().to_vec(),
                reason: "bce_with_logits expects a single logit".into(),
            });
        }
        if target != T::zero() && target != T::one() {
            return Err(TensorError::NumericDomain {
                op: "bce_with_logits",
                reason: format!("target {target} is not 0 or 1"),
            });
        }
        let o = logit.item();
        let id = logit.node();
        Ok(self.output(
            vec![1],
            vec![bce_with_logits_value(o, target)],
            id.is_some(),
            || Op::BceWithLogits {
                x: id.expect("attached"),
                logit: o,
                target,
            },
        ))
    }
}

fn axis_mean<T: Scalar>(xs: &[T], dims: AxisDims) -> Vec<T> {
    let n = T::of(dims.len as f64);
    let mut out = vec![T::zero(); dims.outer * dims.inner];
    for o in 0..dims.outer {
        for i in 0..dims.inner {
            let mut s = T::zero();
            for l in 0..dims.len {
                s = s + xs[dims.index(o, l, i)];
            }
            out[dims.reduced_index(o, i)] = s / n;
        }
    }
    out
}
