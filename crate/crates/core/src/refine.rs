//! Coarse prediction heads, logit-driven style parameters and AdaIN.

use crate::error::Result;
use crate::nn::{Ctx, Init, Linear, Mlp};
use gamed_tensor::{Scalar, Tensor};

/// Width of the reduction layer inside every coarse head.
pub const REDUCED_DIM: usize = 64;
const SIGMA_FLOOR: f64 = 1e-4;

/// `O = classifier(SiLU(reducer(r)))`, a `[1, 1]` logit.
#[derive(Debug, Clone)]
pub struct CoarseHead {
    pub reducer: Linear,
    pub classifier: Linear,
}

impl CoarseHead {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, d: usize) -> Self {
        Self {
            reducer: Linear::new(init, &format!("{name}.reducer"), d, REDUCED_DIM),
            classifier: Linear::new(init, &format!("{name}.classifier"), REDUCED_DIM, 1),
        }
    }

    pub fn reduce<T: Scalar>(&self, ctx: &Ctx<'_, T>, r: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(ctx.tape.silu(&self.reducer.forward(ctx, r)?))
    }

    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, r: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.reduce(ctx, r)?;
        self.classifier.forward(ctx, &h)
    }
}

#[derive(Debug, Clone)]
pub struct StyleParams<T: Scalar> {
    /// `[1, d]`.
    pub mu: Tensor<T>,
    /// `[1, d]`, every entry > 1e-4.
    pub sigma: Tensor<T>,
}

/// Scalar-input MLPs producing `μ` and the pre-softplus `σ`.
#[derive(Debug, Clone)]
pub struct StyleMlps {
    pub mu: Mlp,
    pub sigma: Mlp,
}

impl StyleMlps {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, hidden: usize, d: usize) -> Self {
        Self {
            mu: Mlp::new(init, &format!("{name}.mu"), 1, hidden, d),
            sigma: Mlp::new(init, &format!("{name}.sigma"), 1, hidden, d),
        }
    }

    /// Style from a confidence-like input `s: [1, 1]`.
    pub fn from_signal<T: Scalar>(&self, ctx: &Ctx<'_, T>, s: &Tensor<T>) -> Result<StyleParams<T>> {
        let mu = self.mu.forward(ctx, s)?;
        let raw = self.sigma.forward(ctx, s)?;
        let sigma = ctx.tape.shift(&ctx.tape.softplus(&raw), T::of(SIGMA_FLOOR));
        Ok(StyleParams { mu, sigma })
    }
}

/// `s = sigmoid(O)`, or `1 − sigmoid(O)` when inverted, then the style MLPs.
///
/// The inverted branch evaluates `sigmoid(−O)`, the same value, so that
/// `(O, invert)` and `(−O, plain)` agree to the bit.
pub fn style_from_output<T: Scalar>(ctx: &Ctx<'_, T>, mlps: &StyleMlps, o: &Tensor<T>, invert: bool) -> Result<StyleParams<T>> {
    let s = if invert {
        ctx.tape.sigmoid(&ctx.tape.scale(o, -T::one()))
    } else {
        ctx.tape.sigmoid(o)
    };
    mlps.from_signal(ctx, &s)
}

/// `e = σ ⊙ (r − μ_r)/σ_r + μ`, statistics over the feature axis of `r: [1, d]`.
pub fn adain<T: Scalar>(ctx: &Ctx<'_, T>, r: &Tensor<T>, style: &StyleParams<T>) -> Result<Tensor<T>> {
    let tape = ctx.tape;
    let (mean, std) = tape.reduce_stats(r, 1)?;
    let z = tape.div(&tape.sub(r, &mean)?, &std)?;
    Ok(tape.add(&tape.mul(&z, &style.sigma)?, &style.mu)?)
}

/// Style MLP sets for the four adjusted branches.
#[derive(Debug, Clone)]
pub struct StyleBank {
    pub ip: StyleMlps,
    pub is: StyleMlps,
    pub t: StyleMlps,
    pub x: StyleMlps,
}

impl StyleBank {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, hidden: usize, d: usize) -> Self {
        Self {
            ip: StyleMlps::new(init, "style.ip", hidden, d),
            is: StyleMlps::new(init, "style.is", hidden, d),
            t: StyleMlps::new(init, "style.t", hidden, d),
            x: StyleMlps::new(init, "style.x", hidden, d),
        }
    }
}

/// Switches that the ablations flip on the adjustment stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjustOptions {
    /// When false every `e` is its `r`, untouched.
    pub adain: bool,
    /// When false styles come from a fixed `s = 0.5` instead of the logits.
    pub coarse_constraint: bool,
    /// When false `e_x = r_mm¹` with no adjustment.
    pub consistency: bool,
}

impl Default for AdjustOptions {
    fn default() -> Self {
        Self {
            adain: true,
            coarse_constraint: true,
            consistency: true,
        }
    }
}

/// One adjustable branch: its refined vector and its coarse logit.
pub struct BranchInput<'a, T: Scalar> {
    pub r: &'a Tensor<T>,
    pub logit: Option<&'a Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct AdjustedSet<T: Scalar> {
    pub ip: Option<Tensor<T>>,
    pub is: Option<Tensor<T>>,
    pub t: Option<Tensor<T>>,
    pub x: Option<Tensor<T>>,
    pub mm: Option<Tensor<T>>,
}

/// Adjusts one branch. `invert` selects the `1 − sigmoid(O)` style input.
pub fn adjust_branch<T: Scalar>(
    ctx: &Ctx<'_, T>,
    mlps: &StyleMlps,
    input: &BranchInput<'_, T>,
    invert: bool,
    opts: AdjustOptions,
) -> Result<Tensor<T>> {
    if !opts.adain {
        return Ok(input.r.clone());
    }
    let style = match input.logit {
        Some(o) if opts.coarse_constraint => style_from_output(ctx, mlps, o, invert)?,
        _ => mlps.from_signal(ctx, &Tensor::full([1, 1], T::of(0.5)))?,
    };
    adain(ctx, input.r, &style)
}

/// Inputs for [`adjust_all`]; absent branches stay absent.
pub struct AdjustInputs<'a, T: Scalar> {
    pub ip: Option<BranchInput<'a, T>>,
    pub is: Option<BranchInput<'a, T>>,
    pub t: Option<BranchInput<'a, T>>,
    /// `r_mm¹` with the consistency logit.
    pub x: Option<BranchInput<'a, T>>,
    /// `r_mm⁰`, passed through as `e_mm`.
    pub mm: Option<&'a Tensor<T>>,
}

pub fn adjust_all<T: Scalar>(
    ctx: &Ctx<'_, T>,
    styles: &StyleBank,
    inputs: &AdjustInputs<'_, T>,
    opts: AdjustOptions,
) -> Result<AdjustedSet<T>> {
    let branch = |mlps: &StyleMlps, input: &Option<BranchInput<'_, T>>, invert: bool, opts: AdjustOptions| {
        input.as_ref().map(|b| adjust_branch(ctx, mlps, b, invert, opts)).transpose()
    };
    let x_opts = AdjustOptions {
        adain: opts.adain && opts.consistency,
        ..opts
    };
    Ok(AdjustedSet {
        ip: branch(&styles.ip, &inputs.ip, false, opts)?,
        is: branch(&styles.is, &inputs.is, false, opts)?,
        t: branch(&styles.t, &inputs.t, false, opts)?,
        x: branch(&styles.x, &inputs.x, true, x_opts)?,
        mm: inputs.mm.cloned(),
    })
}
