//! The assembled detector: encoders, expert networks, coarse heads, style
//! adjustment, late fusion and the veto decision.

use crate::encoders::{
    check_image, Augmentation, EncoderConfig, ImagePatternEncoder, ImageSemanticEncoder, IpProjection, TextEncoder,
};
use crate::error::{GamedError, Result};
use crate::moe::{GatingMode, MmoePro, MoeOutput};
use crate::nn::{Ctx, Init};
use crate::record::{ModuleId, NewsRecord};
use crate::refine::{adjust_all, AdjustInputs, AdjustOptions, AdjustedSet, BranchInput, CoarseHead, StyleBank};
use crate::veto::{veto_vote, Rule3Mode, Thresholds, VoteInput, VoteOutcome};
use gamed_tensor::{ParamStore, Scalar, Tape, Tensor};
use serde::{Deserialize, Serialize};

/// What the fusion expert network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionInput {
    /// `r_is¹ + r_t¹`.
    #[default]
    ExpertOutputs,
    /// `f_is + f_t` token-wise; needs `l_t == l_is`.
    RawFeatures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub disable_adain: bool,
    pub disable_veto: bool,
    pub disable_coarse_constraint: bool,
    pub disable_consistency: bool,
    pub classic_mmoe_gating: bool,
    pub module_subset: Vec<ModuleId>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            disable_adain: false,
            disable_veto: false,
            disable_coarse_constraint: false,
            disable_consistency: false,
            classic_mmoe_gating: false,
            module_subset: ModuleId::ALL.to_vec(),
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.module_subset.is_empty() {
            return Err(GamedError::config("module_subset", "must name at least one module"));
        }
        Ok(())
    }

    pub fn includes(&self, m: ModuleId) -> bool {
        self.module_subset.contains(&m)
    }

    /// Active modules in voting order.
    pub fn active_modules(&self) -> Vec<ModuleId> {
        ModuleId::ALL.into_iter().filter(|&m| self.includes(m)).collect()
    }

    /// The part of the ablation that changes training; `disable_veto` only
    /// affects evaluation.
    pub fn training_part(&self) -> AblationConfig {
        let mut a = self.clone();
        a.disable_veto = false;
        a.module_subset = self.active_modules();
        a
    }

    pub fn gating(&self) -> GatingMode {
        if self.classic_mmoe_gating {
            GatingMode::Classic
        } else {
            GatingMode::Pro
        }
    }

    fn adjust_options(&self) -> AdjustOptions {
        AdjustOptions {
            adain: !self.disable_adain,
            coarse_constraint: !self.disable_coarse_constraint,
            consistency: !self.disable_consistency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub n_experts: usize,
    pub thresholds: Thresholds,
    pub rule3: Rule3Mode,
    pub fusion_input: FusionInput,
    pub ablation: AblationConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            n_experts: 4,
            thresholds: Thresholds::default(),
            rule3: Rule3Mode::default(),
            fusion_input: FusionInput::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.n_experts == 0 {
            return Err(GamedError::config("n_experts", "must be positive"));
        }
        self.thresholds
            .validate()
            .map_err(|_| GamedError::config("thresholds", "must satisfy 0 < low < high < 1"))?;
        self.ablation.validate()?;
        if self.fusion_input == FusionInput::RawFeatures && self.encoder.l_t != self.encoder.l_is {
            return Err(GamedError::config("fusion_input", "raw_features needs l_t == l_is"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layout {
    text: TextEncoder,
    image_semantic: ImageSemanticEncoder,
    image_pattern: ImagePatternEncoder,
    project_ip: IpProjection,
    moe_is: MmoePro,
    moe_t: MmoePro,
    moe_mm: MmoePro,
    moe_mix: MmoePro,
    head_ip: CoarseHead,
    head_is: CoarseHead,
    head_t: CoarseHead,
    head_mm: CoarseHead,
    head_mix: CoarseHead,
    head_cons: CoarseHead,
    styles: StyleBank,
}

impl Layout {
    fn build<T: Scalar>(cfg: &ModelConfig, init: &mut Init<'_, T>) -> Self {
        let e = &cfg.encoder;
        let (d, h, n) = (e.d, e.hidden, cfg.n_experts);
        let raw_fusion = cfg.fusion_input == FusionInput::RawFeatures;
        Self {
            text: TextEncoder::new(init, e),
            image_semantic: ImageSemanticEncoder::new(init, e),
            image_pattern: ImagePatternEncoder::new(init, e),
            project_ip: IpProjection::new(init, e),
            moe_is: MmoePro::new(init, "moe.is", d, h, d, n, true),
            moe_t: MmoePro::new(init, "moe.t", d, h, d, n, true),
            moe_mm: MmoePro::new(init, "moe.mm", d, h, d, n, raw_fusion),
            moe_mix: MmoePro::new(init, "moe.mix", 5 * d, h, d, n, false),
            head_ip: CoarseHead::new(init, "head.ip", d),
            head_is: CoarseHead::new(init, "head.is", d),
            head_t: CoarseHead::new(init, "head.t", d),
            head_mm: CoarseHead::new(init, "head.mm", d),
            head_mix: CoarseHead::new(init, "head.mix", d),
            head_cons: CoarseHead::new(init, "head.consistency", d),
            styles: StyleBank::new(init, h, d),
        }
    }
}

/// Veracity logits per voting module (absent outside the module subset),
/// the consistency logit and the fused logit. All `[1, 1]`.
#[derive(Debug, Clone)]
pub struct ModuleLogits<T: Scalar> {
    pub ip: Option<Tensor<T>>,
    pub is: Option<Tensor<T>>,
    pub t: Option<Tensor<T>>,
    pub mm: Option<Tensor<T>>,
    pub cons: Option<Tensor<T>>,
    pub mix: Tensor<T>,
}

impl<T: Scalar> ModuleLogits<T> {
    pub fn get(&self, m: ModuleId) -> Option<&Tensor<T>> {
        match m {
            ModuleId::Ip => self.ip.as_ref(),
            ModuleId::Is => self.is.as_ref(),
            ModuleId::T => self.t.as_ref(),
            ModuleId::Mm => self.mm.as_ref(),
        }
    }

    /// Present module logits in voting order.
    pub fn modules(&self) -> Vec<(ModuleId, &Tensor<T>)> {
        ModuleId::ALL.into_iter().filter_map(|m| self.get(m).map(|o| (m, o))).collect()
    }
}

/// Expert-network outputs `[r⁰, r¹]` per module, and `r_ip`.
#[derive(Debug, Clone)]
pub struct Refined<T: Scalar> {
    pub ip: Option<Tensor<T>>,
    pub is: Option<[Tensor<T>; 2]>,
    pub t: Option<[Tensor<T>; 2]>,
    pub mm: Option<[Tensor<T>; 2]>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutputs<T: Scalar> {
    pub logits: ModuleLogits<T>,
    pub refined: Refined<T>,
    pub adjusted: AdjustedSet<T>,
    /// `[1, 5d]`: `e_ip | e_is | e_t | e_x | e_mm`, zeros for inactive slots.
    pub e_mix: Tensor<T>,
    pub r_mix: Tensor<T>,
    pub vote: VoteOutcome,
}

/// Trainable detector over a parameter store of scalar type `T`.
#[derive(Debug, Clone)]
pub struct GamedModel<T: Scalar = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> GamedModel<T> {
    /// Randomly initialised from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let layout = Layout::build(&config, &mut Init::seeded(&mut params, seed));
        let mut model = Self { config, params, layout };
        model.project_constraints();
        Ok(model)
    }

    /// Every parameter zero (the constrained kernel is still projected).
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let layout = Layout::build(&config, &mut Init::zeros(&mut params));
        let mut model = Self { config, params, layout };
        model.project_constraints();
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> GamedModel<U> {
        GamedModel {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Re-projects the constrained-convolution kernel; call after every update.
    pub fn project_constraints(&mut self) {
        let enc = &self.layout.image_pattern;
        enc.constrain(self.params.get_mut(enc.kernel));
    }

    /// Parameter names grouped by component, for gradient-flow checks.
    pub fn param_group(name: &str) -> &'static str {
        let head = name.split('.').next().unwrap_or(name);
        match head {
            "text" | "image_semantic" | "image_pattern" | "project_ip" => "encoders",
            "moe" if name.contains(".gate") => "gates",
            "moe" => "experts",
            "head" if name.starts_with("head.consistency") => "consistency_head",
            "head" => "coarse_heads",
            "style" => "style_mlps",
            _ => "other",
        }
    }

    /// Full forward pass. `augment` is the image-semantic augmentation to
    /// apply (training only).
    pub fn forward(&self, ctx: &Ctx<'_, T>, record: &NewsRecord, augment: Option<Augmentation>) -> Result<ForwardOutputs<T>> {
        let cfg = &self.config;
        let l = &self.layout;
        let ab = &cfg.ablation;
        let tape = ctx.tape;
        let mode = ab.gating();
        check_image(&record.image, &cfg.encoder)?;

        let need_t = ab.includes(ModuleId::T) || ab.includes(ModuleId::Mm);
        let need_is = ab.includes(ModuleId::Is) || ab.includes(ModuleId::Mm);
        let f_t = need_t.then(|| l.text.forward(ctx, &record.text)).transpose()?;
        let f_is = need_is
            .then(|| l.image_semantic.forward(ctx, &record.image, augment))
            .transpose()?;
        let r_ip = if ab.includes(ModuleId::Ip) {
            let f_ip = l.image_pattern.forward(ctx, &record.image)?;
            Some(l.project_ip.forward(ctx, &f_ip)?)
        } else {
            None
        };
        let moe_t: Option<MoeOutput<T>> = f_t.as_ref().map(|f| l.moe_t.forward(ctx, f, mode)).transpose()?;
        let moe_is: Option<MoeOutput<T>> = f_is.as_ref().map(|f| l.moe_is.forward(ctx, f, mode)).transpose()?;
        let moe_mm = match (ab.includes(ModuleId::Mm), &moe_is, &moe_t) {
            (true, Some(is), Some(t)) => {
                let f_mm = match cfg.fusion_input {
                    FusionInput::ExpertOutputs => tape.add(&is.r[1], &t.r[1])?,
                    FusionInput::RawFeatures => {
                        tape.add(f_is.as_ref().expect("computed"), f_t.as_ref().expect("computed"))?
                    }
                };
                Some(l.moe_mm.forward(ctx, &f_mm, mode)?)
            }
            _ => None,
        };

        let head = |h: &CoarseHead, r: Option<&Tensor<T>>| r.map(|r| h.forward(ctx, r)).transpose();
        let active = |m: ModuleId| ab.includes(m);
        let r_is0 = moe_is.as_ref().filter(|_| active(ModuleId::Is)).map(|o| &o.r[0]);
        let r_t0 = moe_t.as_ref().filter(|_| active(ModuleId::T)).map(|o| &o.r[0]);
        let r_mm = moe_mm.as_ref().map(|o| &o.r);
        let logits_ip = head(&l.head_ip, r_ip.as_ref())?;
        let logits_is = head(&l.head_is, r_is0)?;
        let logits_t = head(&l.head_t, r_t0)?;
        let logits_mm = head(&l.head_mm, r_mm.map(|r| &r[0]))?;
        let logits_cons = if ab.disable_consistency {
            None
        } else {
            head(&l.head_cons, r_mm.map(|r| &r[0]))?
        };

        let inputs = AdjustInputs {
            ip: branch(r_ip.as_ref(), logits_ip.as_ref()),
            is: branch(r_is0, logits_is.as_ref()),
            t: branch(r_t0, logits_t.as_ref()),
            x: branch(r_mm.map(|r| &r[1]), logits_cons.as_ref()),
            mm: r_mm.map(|r| &r[0]),
        };
        let adjusted = adjust_all(ctx, &l.styles, &inputs, ab.adjust_options())?;

        let zero = Tensor::zeros([1, cfg.encoder.d]);
        let slots = [&adjusted.ip, &adjusted.is, &adjusted.t, &adjusted.x, &adjusted.mm];
        let parts: Vec<&Tensor<T>> = slots.iter().map(|e| e.as_ref().unwrap_or(&zero)).collect();
        let e_mix = tape.concat(&parts, 1)?;
        let r_mix = l.moe_mix.forward(ctx, &e_mix, mode)?.r[0].clone();
        let o_mix = l.head_mix.forward(ctx, &r_mix)?;

        let logits = ModuleLogits {
            ip: logits_ip,
            is: logits_is,
            t: logits_t,
            mm: logits_mm,
            cons: logits_cons,
            mix: o_mix,
        };
        let vote = veto_vote(&VoteInput {
            module_logits: logits.modules().into_iter().map(|(m, o)| (m, o.item().to_f64_lossy())).collect(),
            mix_logit: logits.mix.item().to_f64_lossy(),
            thresholds: cfg.thresholds,
            rule3: cfg.rule3,
        })?;
        let refined = Refined {
            ip: r_ip,
            is: moe_is.filter(|_| active(ModuleId::Is)).map(|o| o.r),
            t: moe_t.filter(|_| active(ModuleId::T)).map(|o| o.r),
            mm: moe_mm.map(|o| o.r),
        };
        Ok(ForwardOutputs {
            logits,
            refined,
            adjusted,
            e_mix,
            r_mix,
            vote,
        })
    }

    /// Forward pass with detached parameters.
    pub fn predict(&self, record: &NewsRecord) -> Result<ForwardOutputs<T>> {
        let tape = Tape::new();
        let params = self.params.frozen();
        self.forward(&Ctx::new(&tape, &params), record, None)
    }
}

fn branch<'a, T: Scalar>(r: Option<&'a Tensor<T>>, logit: Option<&'a Tensor<T>>) -> Option<BranchInput<'a, T>> {
    r.map(|r| BranchInput { r, logit })
}

/// `Σ_m BCE(O_m, y)` over the present veracity heads and the fused head,
/// plus `λ·BCE(O_cons, c)` when the consistency head is active.
pub fn compute_loss<T: Scalar>(tape: &Tape<T>, out: &ForwardOutputs<T>, y: u8, c: u8, lambda: f64) -> Result<Tensor<T>> {
    let (y, c) = (T::of(y as f64), T::of(c as f64));
    let mut terms = Vec::with_capacity(6);
    for (_, o) in out.logits.modules() {
        terms.push(tape.bce_with_logits(o, y)?);
    }
    terms.push(tape.bce_with_logits(&out.logits.mix, y)?);
    if let Some(o) = &out.logits.cons {
        terms.push(tape.scale(&tape.bce_with_logits(o, c)?, T::of(lambda)));
    }
    let stacked = tape.concat(&terms.iter().collect::<Vec<_>>(), 0)?;
    Ok(tape.sum(&stacked))
}
