//! Multi-gate mixture of experts with token attention and unnormalised gates.

use crate::error::{GamedError, Result};
use crate::nn::{Ctx, Init, Linear, Mlp};
use gamed_tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

pub const TASKS: usize = 2;
const BETA_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingMode {
    /// Token attention for `f̃`, raw affine gate weights.
    #[default]
    Pro,
    /// Mean pooling for `f̃`, softmax over gate outputs.
    Classic,
}

/// Importance weights and the attention-pooled token: `β: [L, 1]`, `f̃: [1, d]`.
///
/// `βᵢ = softplus(αᵢ) / (Σⱼ softplus(αⱼ) + 1e-8)` with `αᵢ = A(tokenᵢ)`.
pub fn token_attention<T: Scalar>(ctx: &Ctx<'_, T>, att: &Mlp, tokens: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (l, _) = tokens.dims2()?;
    if l == 0 {
        return Err(GamedError::EmptySequence);
    }
    let tape = ctx.tape;
    let alpha = tape.softplus(&att.forward(ctx, tokens)?);
    let z = tape.shift(&tape.sum(&alpha), T::of(BETA_EPS));
    let beta = tape.div(&alpha, &z)?;
    let pooled = tape.matmul(&tape.transpose(&beta)?, tokens)?;
    Ok((beta, pooled))
}

/// Raw gate weights `w_t = f̃·G_t + b_t`, `[1, N]`. No normalisation.
pub fn gate_weights<T: Scalar>(ctx: &Ctx<'_, T>, gates: &[Linear], f_tilde: &Tensor<T>, task: usize) -> Result<Tensor<T>> {
    let gate = gates.get(task).ok_or(GamedError::TaskIndex {
        task,
        tasks: gates.len(),
    })?;
    gate.forward(ctx, f_tilde)
}

/// Per-task results of one expert-network invocation.
#[derive(Debug, Clone)]
pub struct MoeOutput<T: Scalar> {
    /// `r⁰, r¹`, each `[1, d]`.
    pub r: [Tensor<T>; TASKS],
    /// Weights actually applied to the experts, each `[1, N]`.
    pub weights: [Tensor<T>; TASKS],
    /// Stacked expert outputs `[N, d]`.
    pub experts: Tensor<T>,
    /// Token importance `[L, 1]` for token inputs in Pro mode.
    pub beta: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct MmoePro {
    /// Present only for instances that consume token sequences.
    pub attention: Option<Mlp>,
    pub experts: Vec<Mlp>,
    pub gates: Vec<Linear>,
}

impl MmoePro {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        input: usize,
        hidden: usize,
        d: usize,
        n_experts: usize,
        tokens: bool,
    ) -> Self {
        Self {
            attention: tokens.then(|| Mlp::new(init, &format!("{name}.attention"), input, hidden, 1)),
            experts: (0..n_experts)
                .map(|i| Mlp::new(init, &format!("{name}.expert{i}"), input, hidden, d))
                .collect(),
            gates: (0..TASKS)
                .map(|t| Linear::new(init, &format!("{name}.gate{t}"), input, n_experts))
                .collect(),
        }
    }

    /// `f` is either a token matrix `[L, in]` or a single row `[1, in]`.
    /// Experts see the token mean; gates see `f̃`.
    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, f: &Tensor<T>, mode: GatingMode) -> Result<MoeOutput<T>> {
        let tape = ctx.tape;
        let (l, _) = f.dims2()?;
        if l == 0 {
            return Err(GamedError::EmptySequence);
        }
        let mean = if l == 1 { f.clone() } else { tape.mean_axis(f, 0)? };
        let (f_tilde, beta) = match (mode, &self.attention) {
            (GatingMode::Pro, Some(att)) if l > 1 => {
                let (beta, pooled) = token_attention(ctx, att, f)?;
                (pooled, Some(beta))
            }
            _ => (mean.clone(), None),
        };
        let outs = self
            .experts
            .iter()
            .map(|e| e.forward(ctx, &mean))
            .collect::<Result<Vec<_>>>()?;
        let stacked = tape.concat(&outs.iter().collect::<Vec<_>>(), 0)?;
        let mut weights = Vec::with_capacity(TASKS);
        let mut r = Vec::with_capacity(TASKS);
        for task in 0..TASKS {
            let raw = gate_weights(ctx, &self.gates, &f_tilde, task)?;
            let w = match mode {
                GatingMode::Pro => raw,
                GatingMode::Classic => tape.softmax(&raw),
            };
            r.push(tape.matmul(&w, &stacked)?);
            weights.push(w);
        }
        Ok(MoeOutput {
            r: [r[0].clone(), r[1].clone()],
            weights: [weights[0].clone(), weights[1].clone()],
            experts: stacked,
            beta,
        })
    }
}
