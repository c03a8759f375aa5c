//! Trains and scores ablation variants against a shared base configuration.

use crate::error::{GamedError, Result};
use crate::metrics::Metrics;
use crate::model::{AblationConfig, GamedModel, ModelConfig};
use crate::record::{ModuleId, NewsRecord};
use crate::train::{evaluate_report, train, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub ablation: AblationConfig,
}

impl AblationVariant {
    /// Parses one grid entry: `none`, `no_adain`, `no_veto`, `no_coarse`,
    /// `no_consistency`, `classic_mmoe`, or `module_subset=<m>[+<m>…]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let mut a = AblationConfig::default();
        match spec {
            "none" | "full" => {}
            "no_adain" => a.disable_adain = true,
            "no_veto" => a.disable_veto = true,
            "no_coarse" => a.disable_coarse_constraint = true,
            "no_consistency" => a.disable_consistency = true,
            "classic_mmoe" => a.classic_mmoe_gating = true,
            _ => {
                let modules = spec
                    .strip_prefix("module_subset=")
                    .ok_or_else(|| GamedError::config("grid", format!("unknown ablation `{spec}`")))?;
                let mut subset = modules
                    .split('+')
                    .map(|m| m.parse::<ModuleId>().map_err(|e| GamedError::config("grid", e)))
                    .collect::<Result<Vec<_>>>()?;
                subset.sort();
                subset.dedup();
                a.module_subset = subset;
            }
        }
        a.validate()?;
        Ok(Self {
            name: spec.to_string(),
            ablation: a,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub metrics: Metrics,
}

/// Trains every variant with the base seed and data and scores it on `test`.
/// Variants that differ only in evaluation (the veto switch) share one trained model.
pub fn run_ablation(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    variants: &[AblationVariant],
    train_set: &[NewsRecord],
    val_set: &[NewsRecord],
    test_set: &[NewsRecord],
) -> Result<Vec<AblationRow>> {
    let mut trained: Vec<(AblationConfig, GamedModel<f32>)> = Vec::new();
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let key = v.ablation.training_part();
        let idx = match trained.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let cfg = ModelConfig {
                    ablation: key.clone(),
                    ..base.clone()
                };
                let mut model = GamedModel::new(cfg, train_cfg.seed)?;
                train(&mut model, train_set, val_set, train_cfg)?;
                trained.push((key, model));
                trained.len() - 1
            }
        };
        let report = evaluate_report(&trained[idx].1, test_set, train_cfg.consistency_weight)?;
        rows.push(AblationRow {
            variant: v.name.clone(),
            metrics: report.full(!v.ablation.disable_veto),
        });
    }
    Ok(rows)
}
