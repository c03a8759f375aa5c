//! Parameter initialisation and the two layer shapes every module is built from.

use crate::error::Result;
use gamed_tensor::{ParamId, ParamStore, Scalar, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Forward-pass context: the tape ops are recorded on and the parameter
/// tensors (bound leaves while training, detached copies otherwise).
#[derive(Clone, Copy)]
pub struct Ctx<'a, T: Scalar> {
    pub tape: &'a Tape<T>,
    pub params: &'a [Tensor<T>],
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn new(tape: &'a Tape<T>, params: &'a [Tensor<T>]) -> Self {
        Self { tape, params }
    }

    pub fn p(&self, id: ParamId) -> &'a Tensor<T> {
        &self.params[id.0]
    }
}

/// Registers parameters in a store, drawing values from a seeded stream or
/// leaving everything at zero.
pub struct Init<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: Option<ChaCha8Rng>,
}

impl<'a, T: Scalar> Init<'a, T> {
    pub fn seeded(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Self {
            store,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn zeros(store: &'a mut ParamStore<T>) -> Self {
        Self { store, rng: None }
    }

    fn fill(&mut self, name: String, shape: Vec<usize>, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) -> ParamId {
        let n = shape.iter().product();
        let data = match self.rng.as_mut() {
            Some(rng) => (0..n).map(|_| T::of(draw(rng))).collect(),
            None => vec![T::zero(); n],
        };
        let t = Tensor::new(shape, data).expect("parameter shapes are positive");
        self.store.add(name, t)
    }

    /// Glorot-uniform `[fan_in, fan_out]` matrix.
    pub fn glorot(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.fill(name, vec![fan_in, fan_out], |r| r.random_range(-a..a))
    }

    pub fn normal(&mut self, name: String, shape: Vec<usize>, std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("std is positive");
        self.fill(name, shape, |r| dist.sample(r))
    }

    pub fn uniform(&mut self, name: String, shape: Vec<usize>, lo: f64, hi: f64) -> ParamId {
        self.fill(name, shape, |r| r.random_range(lo..hi))
    }

    /// Always zero, whatever the mode.
    pub fn zero(&mut self, name: String, shape: Vec<usize>) -> ParamId {
        self.fill(name, shape, |_| 0.0)
    }
}

/// Affine map `x·W + b` on row vectors, `W: [in, out]`, `b: [1, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: init.glorot(format!("{name}.weight"), fan_in, fan_out),
            bias: init.zero(format!("{name}.bias"), vec![1, fan_out]),
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = ctx.tape.matmul(x, ctx.p(self.weight))?;
        Ok(ctx.tape.add(&y, ctx.p(self.bias))?)
    }
}

/// One hidden layer with SiLU, applied row-wise.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, fan_in: usize, hidden: usize, fan_out: usize) -> Self {
        Self {
            hidden: Linear::new(init, &format!("{name}.hidden"), fan_in, hidden),
            out: Linear::new(init, &format!("{name}.out"), hidden, fan_out),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = ctx.tape.silu(&self.hidden.forward(ctx, x)?);
        self.out.forward(ctx, &h)
    }
}
