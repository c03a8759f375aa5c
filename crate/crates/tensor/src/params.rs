use crate::tape::{Gradients, Tape};
use crate::tensor::{Scalar, Tensor};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Scalar = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value.detach());
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Every parameter as a fresh leaf on `tape`, indexed by [`ParamId`].
    pub fn bind(&self, tape: &Tape<T>) -> Vec<Tensor<T>> {
        self.values.iter().map(|v| tape.leaf(v)).collect()
    }

    /// Every parameter detached: forward passes record nothing.
    pub fn frozen(&self) -> Vec<Tensor<T>> {
        self.values.iter().map(Tensor::detach).collect()
    }

    /// Collects per-parameter gradients for leaves produced by [`Self::bind`].
    pub fn gradients(&self, bound: &[Tensor<T>], grads: &Gradients<T>) -> Vec<Tensor<T>> {
        bound.iter().map(|b| grads.wrt(b)).collect()
    }

    /// Copies values from `other` into matching names. Returns names not found in `other`.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Vec<String> {
        let mut missing = Vec::new();
        for (i, name) in self.names.iter().enumerate() {
            match other.find(name) {
                Some(j) if other.values[j.0].shape() == self.values[i].shape() => {
                    self.values[i] = other.values[j.0].clone();
                }
                _ => missing.push(name.clone()),
            }
        }
        missing
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }
}
