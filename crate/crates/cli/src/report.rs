//! The JSON documents written by `eval` and `explain`; their shapes are
//! pinned by the schemas under `schemas/`.

use gamed_core::{EvalReport, Metrics, ModelConfig, NewsRecord, Rule, Rule3Mode, Thresholds, VoteOutcome};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const EVAL_SCHEMA: &str = include_str!("../schemas/eval.schema.json");
pub const TRACE_SCHEMA: &str = include_str!("../schemas/trace.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub model: String,
    pub data: String,
    pub use_veto: bool,
    pub records: usize,
    pub metrics: Metrics,
    /// Fused-head decisions alone, for comparison.
    pub mix_metrics: Metrics,
    /// Records where the vote disagrees with the fused head.
    pub veto_overrides: usize,
    pub modules: BTreeMap<String, Metrics>,
}

impl EvalFile {
    pub fn new(model: &Path, data: &Path, use_veto: bool, report: &EvalReport) -> Self {
        Self {
            model: model.display().to_string(),
            data: data.display().to_string(),
            use_veto,
            records: report.predictions.len(),
            metrics: report.full(use_veto),
            mix_metrics: report.mix,
            veto_overrides: report.predictions.iter().filter(|p| p.veto_label != p.mix_label).count(),
            modules: report.modules.iter().map(|h| (h.module.to_string(), h.metrics)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceModule {
    pub module: String,
    pub p: f64,
    pub rule: String,
    pub p_mix_before: f64,
    pub p_mix_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub true_label: u8,
    pub theta_high: f64,
    pub theta_low: f64,
    pub rule3: Rule3Mode,
    pub majority_class: u8,
    pub tie: bool,
    pub modules: Vec<TraceModule>,
    /// `P_mix` before the first module and after each one.
    pub p_mix_evolution: Vec<f64>,
    pub p_final: f64,
    pub final_label: u8,
    /// `"concatenated prediction"` when no rule moved `P_mix`, else `"veto"`.
    pub decided_by: String,
}

fn class_name(label: u8) -> &'static str {
    if label == 1 {
        "fake"
    } else {
        "real"
    }
}

impl Trace {
    pub fn new(record: &NewsRecord, config: &ModelConfig, vote: &VoteOutcome) -> Self {
        let Thresholds { high, low } = config.thresholds;
        let t = &vote.trace;
        let mut before = t.initial_p_mix;
        let modules = t
            .steps
            .iter()
            .map(|s| {
                let m = TraceModule {
                    module: s.module.to_string(),
                    p: s.p,
                    rule: s.rule.as_str().into(),
                    p_mix_before: before,
                    p_mix_after: s.p_mix_after,
                };
                before = s.p_mix_after;
                m
            })
            .collect();
        let mut evolution = vec![t.initial_p_mix];
        evolution.extend(t.steps.iter().map(|s| s.p_mix_after));
        let all_r4 = t.steps.iter().all(|s| s.rule == Rule::R4);
        Self {
            id: record.id.clone(),
            true_label: record.label,
            theta_high: high,
            theta_low: low,
            rule3: config.rule3,
            majority_class: t.majority_class,
            tie: t.tie,
            modules,
            p_mix_evolution: evolution,
            p_final: vote.p_final,
            final_label: vote.label,
            decided_by: if all_r4 { "concatenated prediction" } else { "veto" }.into(),
        }
    }

    /// One line per module, then the verdict.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .modules
            .iter()
            .map(|m| {
                let what = match m.rule.as_str() {
                    "R2" => format!(
                        "P > θ_high {} and above P_mix: P_mix {:.4} -> {:.4}",
                        self.theta_high, m.p_mix_before, m.p_mix_after
                    ),
                    "R3" => format!(
                        "P < θ_low {} on the majority side: P_mix {:.4} -> {:.4}",
                        self.theta_low, m.p_mix_before, m.p_mix_after
                    ),
                    _ => format!("no veto, P_mix stays {:.4}", m.p_mix_after),
                };
                format!("{:<3} P={:.4}  {}  {}", m.module, m.p, m.rule, what)
            })
            .collect();
        let how = if self.decided_by == "veto" {
            "the veto rules adjusted the concatenated prediction"
        } else {
            "the concatenated prediction decided"
        };
        lines.push(format!(
            "final: {} (P_mix {:.4}, majority {}{}); {how}",
            class_name(self.final_label),
            self.p_final,
            class_name(self.majority_class),
            if self.tie { ", tied" } else { "" },
        ));
        lines
    }
}
