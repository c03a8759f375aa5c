use std::fmt;
use std::sync::Arc;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

/// Floating-point element type usable in a [`Tensor`].
///
/// Training runs in `f32`; gradient checks instantiate the same code in `f64`.
pub trait Scalar:
    Float + FromPrimitive + Default + fmt::Debug + fmt::Display + Send + Sync + std::iter::Sum + 'static
{
    /// Converts an `f64` literal into this type.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("numeric domain error in {op}: {reason}")]
    NumericDomain { op: &'static str, reason: String },
    #[error("index {index} out of range for extent {extent}")]
    IndexOutOfRange { index: usize, extent: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss tensor is not attached to the tape")]
    DetachedLoss,
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Identifier of a node recorded on a [`crate::Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense row-major array with an optional tape attachment.
///
/// Values are shared behind an `Arc`, so cloning a tensor (and saving it on
/// the tape for the backward sweep) never copies the buffer.
#[derive(Clone)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    node: Option<NodeId>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(TensorError::InvalidShape {
                shape,
                reason: "extents must be positive".into(),
            });
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::InvalidShape {
                shape,
                reason: format!("expected {n} values, got {}", data.len()),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
            node: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::new(shape, vec![T::zero(); n]).expect("zeros has consistent shape")
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::new(shape, vec![value; n]).expect("full has consistent shape")
    }

    pub fn scalar(value: T) -> Self {
        Self::new(vec![1], vec![value]).expect("scalar shape")
    }

    /// A `[1, n]` row vector.
    pub fn row(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(vec![1, n], values)
    }

    /// Builds a tensor from `f64` values, converting to `T`.
    pub fn from_f64(shape: impl Into<Vec<usize>>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::of(v)).collect())
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>, node: Option<NodeId>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data: Arc::new(data),
            node,
        }
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

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn shared(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    /// Mutable access to the values. Copies the buffer if it is shared.
    pub fn values_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub fn is_attached(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, no tape attachment.
    pub fn detach(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    pub(crate) fn with_node(mut self, node: Option<NodeId>) -> Self {
        self.node = node;
        self
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected a rank-2 tensor".into(),
            }),
        }
    }

    /// Converts element type, dropping any tape attachment.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect()),
            node: None,
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("node", &self.node)
            .field("values", &&self.data[..self.data.len().min(8)])
            .finish()
    }
}

impl<T: Scalar> PartialEq for Tensor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}
