//! Threshold-based veto voting over per-module confidences.

use crate::error::{GamedError, Result};
use crate::record::ModuleId;
use gamed_tensor::sigmoid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub high: f64,
    pub low: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { high: 0.9, low: 0.1 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low && self.low < self.high && self.high < 1.0) {
            return Err(GamedError::MalformedVote(format!(
                "thresholds must satisfy 0 < low < high < 1, got low {} high {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Which modules Rule 3 averages against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule3Mode {
    /// Maximum over modules outside the majority class, or over all modules
    /// when every module is in it.
    #[default]
    OutsideMajority,
    /// Maximum over all modules.
    AllModules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    R2,
    R3,
    R4,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R4 => "R4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteStep {
    pub module: ModuleId,
    pub p: f64,
    pub rule: Rule,
    pub p_mix_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTrace {
    pub steps: Vec<VoteStep>,
    pub initial_p_mix: f64,
    pub final_p_mix: f64,
    pub majority_class: u8,
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub label: u8,
    pub p_final: f64,
    pub trace: VoteTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteInput {
    /// In iteration order ip, is, t, mm (a subsequence of it for subset runs).
    pub module_logits: Vec<(ModuleId, f64)>,
    pub mix_logit: f64,
    pub thresholds: Thresholds,
    pub rule3: Rule3Mode,
}

pub fn confidence(logit: f64) -> f64 {
    sigmoid(logit)
}

fn decision(p: f64) -> u8 {
    u8::from(p > 0.5)
}

/// Mode of the per-module decisions; a tie goes to the class `p_mix0` implies.
pub fn majority_class(probs: &[f64], p_mix0: f64) -> (u8, bool) {
    let ones = probs.iter().filter(|&&p| decision(p) == 1).count();
    let zeros = probs.len() - ones;
    match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => (1, false),
        std::cmp::Ordering::Less => (0, false),
        std::cmp::Ordering::Equal => (decision(p_mix0), true),
    }
}

fn validate_modules(modules: &[(ModuleId, f64)]) -> Result<()> {
    if modules.is_empty() {
        return Err(GamedError::MalformedVote("no modules to vote".into()));
    }
    if modules.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(GamedError::MalformedVote(
            "modules must be distinct and ordered ip, is, t, mm".into(),
        ));
    }
    Ok(())
}

/// Rules 2–4 on confidences directly, starting from `p_mix0`.
pub fn vote_on_confidences(
    modules: &[(ModuleId, f64)],
    p_mix0: f64,
    thresholds: Thresholds,
    rule3: Rule3Mode,
) -> Result<VoteOutcome> {
    thresholds.validate()?;
    validate_modules(modules)?;
    if let Some(&(m, p)) = modules.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
        return Err(GamedError::MalformedVote(format!("confidence {p} of module {m} is outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&p_mix0) {
        return Err(GamedError::MalformedVote(format!("initial P_mix {p_mix0} is outside [0, 1]")));
    }
    let probs: Vec<f64> = modules.iter().map(|&(_, p)| p).collect();
    let (majority, tie) = majority_class(&probs, p_mix0);
    let max_of = |keep: &dyn Fn(f64) -> bool| probs.iter().copied().filter(|&p| keep(p)).fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
    let rule3_target = match rule3 {
        Rule3Mode::OutsideMajority => max_of(&|p| decision(p) != majority).or_else(|| max_of(&|_| true)),
        Rule3Mode::AllModules => max_of(&|_| true),
    }
    .expect("at least one module");

    let mut p_mix = p_mix0;
    let mut steps = Vec::with_capacity(modules.len());
    for &(module, p) in modules {
        let rule = if p > thresholds.high && p > p_mix {
            p_mix = p;
            Rule::R2
        } else if p < thresholds.low && decision(p) == majority {
            p_mix = 0.5 * (p_mix + rule3_target);
            Rule::R3
        } else {
            Rule::R4
        };
        steps.push(VoteStep {
            module,
            p,
            rule,
            p_mix_after: p_mix,
        });
    }
    Ok(VoteOutcome {
        label: decision(p_mix),
        p_final: p_mix,
        trace: VoteTrace {
            steps,
            initial_p_mix: p_mix0,
            final_p_mix: p_mix,
            majority_class: majority,
            tie,
        },
    })
}

/// Rule 1 (`P_mix = sigmoid(O_mix)`) followed by Rules 2–4.
pub fn veto_vote(input: &VoteInput) -> Result<VoteOutcome> {
    if let Some((m, o)) = input.module_logits.iter().find(|(_, o)| o.is_nan()) {
        return Err(GamedError::MalformedVote(format!("logit of module {m} is {o}")));
    }
    if input.mix_logit.is_nan() {
        return Err(GamedError::MalformedVote("mix logit is NaN".into()));
    }
    let probs: Vec<(ModuleId, f64)> = input.module_logits.iter().map(|&(m, o)| (m, confidence(o))).collect();
    vote_on_confidences(&probs, confidence(input.mix_logit), input.thresholds, input.rule3)
}
