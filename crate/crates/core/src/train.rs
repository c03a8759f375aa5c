//! Mini-batch training with AdamW and per-epoch evaluation.

use crate::encoders::Augmentation;
use crate::error::{GamedError, Result};
use crate::metrics::Metrics;
use crate::model::{compute_loss, GamedModel};
use crate::nn::Ctx;
use crate::record::{ModuleId, NewsRecord};
use crate::veto::confidence;
use gamed_tensor::{bce_with_logits_value, AdamW, AdamWConfig, Scalar, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// λ on the consistency loss.
    pub consistency_weight: f64,
    /// Image-semantic augmentation during training.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamWConfig::default();
        Self {
            epochs: 10,
            batch_size: 32,
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            weight_decay: opt.weight_decay,
            consistency_weight: 1.0,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(GamedError::config("batch_size", "must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(GamedError::config("lr", "must be finite and non-negative"));
        }
        for (key, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(GamedError::config(key, "must lie in [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(GamedError::config("eps", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(GamedError::config("weight_decay", "must be non-negative"));
        }
        if !(self.consistency_weight >= 0.0 && self.consistency_weight.is_finite()) {
            return Err(GamedError::config("consistency_weight", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Augmentation stream for one sample of one epoch.
    pub fn sample_rng(&self, epoch: usize, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((epoch as u64) << 32) | index as u64);
        rng
    }
}

/// Per-sample decision details from an evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: u8,
    pub veto_label: u8,
    pub mix_label: u8,
    pub p_mix: f64,
    pub p_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadReport {
    pub module: ModuleId,
    /// Mean BCE of this head against the veracity label.
    pub loss: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean training objective.
    pub loss: f64,
    /// Decisions from the veto vote.
    pub veto: Metrics,
    /// Decisions from `sigmoid(O_mix) > 0.5` alone.
    pub mix: Metrics,
    pub modules: Vec<HeadReport>,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn full(&self, use_veto: bool) -> Metrics {
        if use_veto {
            self.veto
        } else {
            self.mix
        }
    }
}

/// Runs the model over `data` with detached parameters and no augmentation.
pub fn evaluate_report<T: Scalar>(model: &GamedModel<T>, data: &[NewsRecord], lambda: f64) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(GamedError::EmptyDataset);
    }
    let params = model.params.frozen();
    let active = model.config.ablation.active_modules();
    let mut head_loss = vec![0.0; active.len()];
    let mut head_pred: Vec<Vec<u8>> = vec![Vec::with_capacity(data.len()); active.len()];
    let mut labels = Vec::with_capacity(data.len());
    let mut predictions = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for record in data {
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &params);
        let out = model.forward(&ctx, record, None)?;
        let loss = compute_loss(&tape, &out, record.label, record.consistency_target(), lambda)?;
        total += loss.item().to_f64_lossy();
        let y = record.label as f64;
        for (k, &m) in active.iter().enumerate() {
            let o = out.logits.get(m).expect("active module has a logit").item().to_f64_lossy();
            head_loss[k] += bce_with_logits_value(o, y);
            head_pred[k].push(u8::from(confidence(o) > 0.5));
        }
        let p_mix = confidence(out.logits.mix.item().to_f64_lossy());
        labels.push(record.label);
        predictions.push(Prediction {
            id: record.id.clone(),
            label: record.label,
            veto_label: out.vote.label,
            mix_label: u8::from(p_mix > 0.5),
            p_mix,
            p_final: out.vote.p_final,
        });
    }
    let n = data.len() as f64;
    let veto: Vec<u8> = predictions.iter().map(|p| p.veto_label).collect();
    let mix: Vec<u8> = predictions.iter().map(|p| p.mix_label).collect();
    let modules = active
        .iter()
        .zip(head_loss)
        .zip(&head_pred)
        .map(|((&module, loss), preds)| {
            Ok(HeadReport {
                module,
                loss: loss / n,
                metrics: Metrics::from_predictions(preds, &labels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        loss: total / n,
        veto: Metrics::from_predictions(&veto, &labels)?,
        mix: Metrics::from_predictions(&mix, &labels)?,
        modules,
        predictions,
    })
}

/// Metrics from the veto decision, or from `O_mix` alone when `use_veto` is false.
pub fn evaluate<T: Scalar>(model: &GamedModel<T>, data: &[NewsRecord], use_veto: bool) -> Result<Metrics> {
    Ok(evaluate_report(model, data, 1.0)?.full(use_veto))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub split: String,
    /// `full` or a module id.
    pub module: String,
    pub loss: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
    /// Mean clean training loss after each epoch, index 0 before training.
    pub train_loss: Vec<f64>,
    /// Mean mini-batch loss seen during each epoch (index 0 unused, NaN).
    pub batch_loss: Vec<f64>,
}

fn log_rows<T: Scalar>(
    model: &GamedModel<T>,
    epoch: usize,
    split: &str,
    data: &[NewsRecord],
    lambda: f64,
    rows: &mut Vec<EpochRow>,
) -> Result<f64> {
    let report = evaluate_report(model, data, lambda)?;
    rows.push(EpochRow {
        epoch,
        split: split.into(),
        module: "full".into(),
        loss: report.loss,
        metrics: report.full(!model.config.ablation.disable_veto),
    });
    for h in &report.modules {
        rows.push(EpochRow {
            epoch,
            split: split.into(),
            module: h.module.as_str().into(),
            loss: h.loss,
            metrics: h.metrics,
        });
    }
    Ok(report.loss)
}

/// Trains in place. Epoch `e` shuffles with a stream seeded by `seed ^ e`;
/// each epoch (and epoch 0, before any update) logs train and validation
/// metrics for the full model and every active module head.
pub fn train<T: Scalar>(
    model: &mut GamedModel<T>,
    train_set: &[NewsRecord],
    val_set: &[NewsRecord],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(GamedError::EmptyDataset);
    }
    let lambda = cfg.consistency_weight;
    let mut log = TrainLog::default();
    let mut opt = AdamW::new(&model.params, cfg.optimizer());
    let flags = model.config.encoder.augment;

    log.train_loss.push(log_rows(model, 0, "train", train_set, lambda, &mut log.rows)?);
    if !val_set.is_empty() {
        log_rows(model, 0, "val", val_set, lambda, &mut log.rows)?;
    }
    log.batch_loss.push(f64::NAN);

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ epoch as u64));
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let tape = Tape::new();
            let bound = model.params.bind(&tape);
            let ctx = Ctx::new(&tape, &bound);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let record = &train_set[i];
                let augment = cfg
                    .augment
                    .then(|| Augmentation::sample(flags, &mut cfg.sample_rng(epoch, i)));
                let out = match model.forward(&ctx, record, augment) {
                    Err(GamedError::MalformedVote(_)) => {
                        return Err(GamedError::Divergence {
                            epoch,
                            batch: b,
                            loss: f64::NAN,
                        })
                    }
                    other => other?,
                };
                losses.push(compute_loss(&tape, &out, record.label, record.consistency_target(), lambda)?);
            }
            let stacked = tape.concat(&losses.iter().collect::<Vec<_>>(), 0)?;
            let loss = tape.scale(&tape.sum(&stacked), T::one() / T::of(batch.len() as f64));
            let value = loss.item().to_f64_lossy();
            if !value.is_finite() {
                return Err(GamedError::Divergence {
                    epoch,
                    batch: b,
                    loss: value,
                });
            }
            epoch_loss += value * batch.len() as f64;
            let grads = tape.backward(&loss)?;
            let grads = model.params.gradients(&bound, &grads);
            opt.step(&mut model.params, &grads)?;
            model.project_constraints();
        }
        log.batch_loss.push(epoch_loss / train_set.len() as f64);
        // the vote refuses non-finite logits, which only arise when the loss is non-finite too
        let clean = match log_rows(model, epoch, "train", train_set, lambda, &mut log.rows) {
            Err(GamedError::MalformedVote(_)) => f64::NAN,
            other => other?,
        };
        if !clean.is_finite() {
            return Err(GamedError::Divergence {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss: clean,
            });
        }
        log.train_loss.push(clean);
        if !val_set.is_empty() {
            log_rows(model, epoch, "val", val_set, lambda, &mut log.rows)?;
        }
    }
    Ok(log)
}
