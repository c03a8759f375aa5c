//! Minimal dense tensors with tape-based reverse-mode differentiation.
//!
//! Operations are methods on [`Tape`]. A result is recorded only when one of
//! its operands is attached (a leaf created by [`Tape::leaf`] or the output of
//! a recorded op), so running a model over detached parameters is an ordinary
//! forward pass with no bookkeeping.
//!
//! ```
//! use gamed_tensor::{Tape, Tensor};
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.leaf(&Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
//! let sq = tape.mul(&x, &x).unwrap();
//! let loss = tape.sum(&sq);
//! let grads = tape.backward(&loss).unwrap();
//! assert_eq!(grads.wrt(&x).values(), &[2.0, -4.0, 1.0]);
//! ```

mod adamw;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adamw::{AdamW, AdamWConfig, AdamWState};
pub use ops::{bce_with_logits_value, sigmoid, silu, softplus, DIV_EPS, STD_FLOOR};
pub use params::{ParamId, ParamStore};
pub use tape::{Activation, Gradients, Tape};
pub use tensor::{NodeId, Result, Scalar, Tensor, TensorError};
