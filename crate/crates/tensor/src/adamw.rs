//! Adam with decoupled weight decay.

use crate::params::ParamStore;
use crate::tensor::{Result, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamWState<T: Scalar = f32> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub config: AdamWConfig,
    shape: Vec<usize>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(shape: &[usize], config: AdamWConfig) -> Self {
        let n = shape.iter().product();
        Self {
            step: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            config,
            shape: shape.to_vec(),
        }
    }

    /// One update:
    /// `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`, then
    /// `p ← p − lr·(m̂/(√v̂ + eps) + wd·p)` with bias-corrected `m̂`, `v̂`.
    pub fn step(&mut self, param: &mut Tensor<T>, grad: &Tensor<T>) -> Result<()> {
        if param.shape() != self.shape.as_slice() || grad.shape() != self.shape.as_slice() {
            return Err(TensorError::ShapeMismatch {
                op: "adamw_step",
                lhs: param.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (lr, eps, wd) = (T::of(c.lr), T::of(c.eps), T::of(c.weight_decay));
        let bc1 = T::one() - T::of(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::of(c.beta2.powi(self.step as i32));
        let values = param.values_mut();
        for (i, (p, &g)) in values.iter_mut().zip(grad.values()).enumerate() {
            let m = b1 * self.m[i] + (T::one() - b1) * g;
            let v = b2 * self.v[i] + (T::one() - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            *p = *p - lr * (m_hat / (v_hat.sqrt() + eps) + wd * *p);
        }
        Ok(())
    }
}

/// AdamW over every tensor of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamW<T: Scalar = f32> {
    states: Vec<AdamWState<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &ParamStore<T>, config: AdamWConfig) -> Self {
        Self {
            states: params
                .ids()
                .map(|id| AdamWState::new(params.get(id).shape(), config))
                .collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.states.first().map_or(0, |s| s.step)
    }

    /// `grads` is indexed like the store.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        for ((state, id), g) in self.states.iter_mut().zip(params.ids().collect::<Vec<_>>()).zip(grads) {
            state.step(params.get_mut(id), g)?;
        }
        Ok(())
    }
}
