//! Independent reference implementations shared by the integration tests.
//!
//! Everything here is written from the defining formulas with plain loops
//! over `f64`, and never calls into the code it is used to check (apart from
//! reading parameter values).

#![allow(dead_code)]

pub mod criteria;

use gamed_core::encoders::EncoderConfig;
use gamed_core::moe::{GatingMode, MmoePro};
use gamed_core::nn::{Ctx, Linear, Mlp};
use gamed_core::record::{ModuleId, NewsRecord};
use gamed_core::{compute_loss, generate, FusionInput, GamedModel, GenSpec, ModelConfig, Rule3Mode, Thresholds};
use gamed_tensor::{sigmoid, Tape, Tensor};

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `x·W + b` for one row, reading `W: [in, out]` row-major.
pub fn linear(params: &[Tensor<f64>], l: &Linear, x: &[f64]) -> Vec<f64> {
    let w = params[l.weight.0].values();
    let b = params[l.bias.0].values();
    (0..l.fan_out)
        .map(|j| b[j] + (0..l.fan_in).map(|i| x[i] * w[i * l.fan_out + j]).sum::<f64>())
        .collect()
}

pub fn mlp(params: &[Tensor<f64>], m: &Mlp, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = linear(params, &m.hidden, x).into_iter().map(silu).collect();
    linear(params, &m.out, &h)
}

/// Expert-network outputs `[r⁰, r¹]` by explicit accumulation.
pub fn naive_moe(params: &[Tensor<f64>], moe: &MmoePro, tokens: &[Vec<f64>], mode: GatingMode) -> [Vec<f64>; 2] {
    let l = tokens.len();
    let d_in = tokens[0].len();
    let mut mean = vec![0.0; d_in];
    for t in tokens {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v / l as f64;
        }
    }
    let f_tilde = match (mode, &moe.attention) {
        (GatingMode::Pro, Some(att)) if l > 1 => {
            let alpha: Vec<f64> = tokens.iter().map(|t| softplus(mlp(params, att, t)[0])).collect();
            let z: f64 = alpha.iter().sum::<f64>() + 1e-8;
            let mut pooled = vec![0.0; d_in];
            for (a, t) in alpha.iter().zip(tokens) {
                for (p, v) in pooled.iter_mut().zip(t) {
                    *p += a / z * v;
                }
            }
            pooled
        }
        _ => mean.clone(),
    };
    let experts: Vec<Vec<f64>> = moe.experts.iter().map(|e| mlp(params, e, &mean)).collect();
    let task = |t: usize| {
        let mut w = linear(params, &moe.gates[t], &f_tilde);
        if mode == GatingMode::Classic {
            let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = w.iter().map(|v| (v - m).exp()).sum();
            w = w.iter().map(|v| (v - m).exp() / s).collect();
        }
        let mut r = vec![0.0; experts[0].len()];
        for (wi, e) in w.iter().zip(&experts) {
            for (ri, ei) in r.iter_mut().zip(e) {
                *ri += wi * ei;
            }
        }
        r
    };
    [task(0), task(1)]
}

/// Plain sliding-window convolution of a `k×k` kernel, valid padding.
pub fn naive_conv(image: &[f64], h: usize, w: usize, kernel: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for y in 0..=h - k {
        for x in 0..=w - k {
            let mut acc = 0.0;
            for dy in 0..k {
                for dx in 0..k {
                    acc += kernel[dy * k + dx] * image[(y + dy) * w + x + dx];
                }
            }
            out.push(acc);
        }
    }
    out
}

/// One veto step as the literal tracer reports it.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedStep {
    pub rule: &'static str,
    pub p_mix_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traced {
    pub majority: u8,
    pub steps: Vec<TracedStep>,
    pub p_final: f64,
    pub label: u8,
}

/// Rules 1–4 transcribed one at a time.
pub fn literal_trace(module_logits: &[f64], mix_logit: f64, high: f64, low: f64, mode: Rule3Mode) -> Traced {
    let p: Vec<f64> = module_logits.iter().map(|&o| sigmoid(o)).collect();
    let p_mix0 = sigmoid(mix_logit);

    let mut fake_votes = 0;
    let mut real_votes = 0;
    for &pi in &p {
        if pi > 0.5 {
            fake_votes += 1;
        } else {
            real_votes += 1;
        }
    }
    let majority = if fake_votes > real_votes {
        1
    } else if real_votes > fake_votes {
        0
    } else if p_mix0 > 0.5 {
        1
    } else {
        0
    };

    let mut outside = Vec::new();
    for &pi in &p {
        let class = if pi > 0.5 { 1 } else { 0 };
        if class != majority {
            outside.push(pi);
        }
    }
    let pool = match mode {
        Rule3Mode::OutsideMajority if !outside.is_empty() => outside,
        _ => p.clone(),
    };
    let mut target = pool[0];
    for &v in &pool[1..] {
        if v > target {
            target = v;
        }
    }

    let mut p_mix = p_mix0;
    let mut steps = Vec::new();
    for &pi in &p {
        let class = if pi > 0.5 { 1 } else { 0 };
        let rule;
        if pi > high && pi > p_mix {
            p_mix = pi;
            rule = "R2";
        } else if pi < low && class == majority {
            p_mix = 0.5 * (p_mix + target);
            rule = "R3";
        } else {
            rule = "R4";
        }
        steps.push(TracedStep { rule, p_mix_after: p_mix });
    }
    Traced {
        majority,
        steps,
        p_final: p_mix,
        label: if p_mix > 0.5 { 1 } else { 0 },
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// The veto grid: every value of `{0.05, 0.15, …, 0.95}`.
pub fn grid_values() -> Vec<f64> {
    (0..10).map(|i| 0.05 + 0.1 * i as f64).collect()
}

pub const THRESHOLD_PAIRS: [Thresholds; 2] = [Thresholds { high: 0.9, low: 0.1 }, Thresholds { high: 0.7, low: 0.3 }];

/// Exhaustively compares `veto_vote` with the literal tracer over the grid
/// (four module confidences and the initial mix confidence). Returns
/// `(cases, mismatches)`.
pub fn exhaustive_veto_check(mode: Rule3Mode) -> (usize, Vec<String>) {
    use gamed_core::{veto_vote, VoteInput};
    let g = grid_values();
    let mut cases = 0;
    let mut bad = Vec::new();
    for th in THRESHOLD_PAIRS {
        for idx in 0..100_000usize {
            let pick = |slot: u32| g[idx / 10usize.pow(slot) % 10];
            let probs = [pick(0), pick(1), pick(2), pick(3)];
            let p_mix0 = pick(4);
            let logits: Vec<f64> = probs.iter().map(|&p| logit(p)).collect();
            let mix = logit(p_mix0);
            let out = veto_vote(&VoteInput {
                module_logits: ModuleId::ALL.into_iter().zip(logits.iter().copied()).collect(),
                mix_logit: mix,
                thresholds: th,
                rule3: mode,
            })
            .expect("grid inputs are valid");
            let want = literal_trace(&logits, mix, th.high, th.low, mode);
            let got = Traced {
                majority: out.trace.majority_class,
                steps: out
                    .trace
                    .steps
                    .iter()
                    .map(|s| TracedStep {
                        rule: s.rule.as_str(),
                        p_mix_after: s.p_mix_after,
                    })
                    .collect(),
                p_final: out.p_final,
                label: out.label,
            };
            let modules_ok = out.trace.steps.iter().map(|s| s.module).eq(ModuleId::ALL);
            if got != want || !modules_ok || out.trace.final_p_mix != out.p_final {
                bad.push(format!("{probs:?} mix {p_mix0} {th:?}: got {got:?}, want {want:?}"));
            }
            cases += 1;
        }
    }
    (cases, bad)
}

/// Exact counts by brute force.
pub fn count_confusion(pred: &[u8], labels: &[u8]) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for i in 0..pred.len() {
        if pred[i] == 1 && labels[i] == 1 {
            c.0 += 1;
        }
        if pred[i] == 1 && labels[i] == 0 {
            c.1 += 1;
        }
        if pred[i] == 0 && labels[i] == 0 {
            c.2 += 1;
        }
        if pred[i] == 0 && labels[i] == 1 {
            c.3 += 1;
        }
    }
    c
}

/// Logistic regression on normalised bag-of-tokens counts, full-batch
/// gradient descent from zero. Returns test accuracy.
pub fn bag_of_tokens_probe(train: &[NewsRecord], test: &[NewsRecord], vocab: usize) -> f64 {
    let features = |r: &NewsRecord| {
        let mut f = vec![0.0; vocab];
        for &t in &r.text {
            f[t as usize] += 1.0 / r.text.len() as f64;
        }
        f
    };
    let xs: Vec<Vec<f64>> = train.iter().map(features).collect();
    let mut w = vec![0.0; vocab];
    let mut b = 0.0;
    let lr = 2.0;
    for _ in 0..400 {
        let mut gw = vec![0.0; vocab];
        let mut gb = 0.0;
        for (x, r) in xs.iter().zip(train) {
            let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(z) - r.label as f64;
            for (g, a) in gw.iter_mut().zip(x) {
                *g += err * a;
            }
            gb += err;
        }
        let n = train.len() as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g / n;
        }
        b -= lr * gb / n;
    }
    let correct = test
        .iter()
        .filter(|r| {
            let x = features(r);
            let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            u8::from(z > 0.0) == r.label
        })
        .count();
    correct as f64 / test.len() as f64
}

/// Small encoder shapes (d = 8) for exhaustive gradient checks.
pub fn micro_encoder() -> EncoderConfig {
    EncoderConfig {
        d: 8,
        hidden: 8,
        l_t: 4,
        l_is: 4,
        vocab: 16,
        grid: 8,
        kernel: 3,
        ip_channels: 2,
        d_ip: 4,
        ..Default::default()
    }
}

/// Three structurally different d = 8 configurations with their seeds.
pub fn micro_configs() -> Vec<(String, ModelConfig, u64)> {
    let base = ModelConfig {
        encoder: micro_encoder(),
        ..Default::default()
    };
    let mut raw = base.clone();
    raw.fusion_input = FusionInput::RawFeatures;
    raw.encoder.ip_channels = 3;
    let mut classic = base.clone();
    classic.n_experts = 3;
    classic.ablation.classic_mmoe_gating = true;
    vec![
        ("default".into(), base, 101),
        ("raw-fusion".into(), raw, 202),
        ("classic-gating".into(), classic, 303),
    ]
}

pub fn micro_records(seed: u64, n: usize) -> Vec<NewsRecord> {
    let spec = GenSpec {
        n_train: n,
        n_val: 1,
        n_test: 1,
        vocab: 16,
        topics: 2,
        grid: 8,
        text_len: 6,
        seed,
        ..Default::default()
    };
    generate(&spec).expect("valid micro spec").train
}

fn model_loss(model: &GamedModel<f64>, params: &[Tensor<f64>], tape: &Tape<f64>, records: &[NewsRecord]) -> Tensor<f64> {
    let ctx = Ctx::new(tape, params);
    let mut total: Option<Tensor<f64>> = None;
    for r in records {
        let out = model.forward(&ctx, r, None).expect("forward");
        let l = compute_loss(tape, &out, r.label, r.consistency_target(), 0.7).expect("loss");
        total = Some(match total {
            Some(t) => tape.add(&t, &l).expect("scalar add"),
            None => l,
        });
    }
    total.expect("at least one record")
}

pub struct GradcheckReport {
    pub coordinates: usize,
    pub worst: f64,
    pub worst_at: String,
}

/// An initialised model with every bias redrawn from U(−0.5, 0.5). With
/// zero biases some features (the pattern branch in particular) are ~1e-3,
/// comparable to a finite-difference step, which makes differences useless
/// as a reference; random biases put every feature at O(1).
pub fn random_model(cfg: ModelConfig, seed: u64) -> GamedModel<f64> {
    use rand::{Rng, SeedableRng};
    let mut model = GamedModel::<f64>::new(cfg, seed).expect("valid micro config");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for id in model.params.ids().collect::<Vec<_>>() {
        if model.params.name(id).ends_with(".bias") {
            for v in model.params.get_mut(id).values_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    model
}

/// Every parameter coordinate of a random model, backward against central
/// differences with step `h` in f64. The error per coordinate is
/// `|a − n| / max(|a|, |n|, 1)`.
pub fn full_model_gradcheck(cfg: ModelConfig, seed: u64, h: f64) -> GradcheckReport {
    let model = random_model(cfg, seed);
    let records = micro_records(seed, 2);
    let tape = Tape::new();
    let bound = model.params.bind(&tape);
    let loss = model_loss(&model, &bound, &tape, &records);
    let grads = tape.backward(&loss).expect("scalar loss");
    let analytic = model.params.gradients(&bound, &grads);

    let mut params = model.params.frozen();
    let eval = |params: &[Tensor<f64>]| model_loss(&model, params, &Tape::new(), &records).item();
    let mut report = GradcheckReport {
        coordinates: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    for id in model.params.ids() {
        for i in 0..params[id.0].numel() {
            let orig = params[id.0].values()[i];
            params[id.0].values_mut()[i] = orig + h;
            let up = eval(&params);
            params[id.0].values_mut()[i] = orig - h;
            let down = eval(&params);
            params[id.0].values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[id.0].values()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            report.coordinates += 1;
            if err > report.worst {
                report.worst = err;
                report.worst_at = format!("{}[{i}] analytic {a} numeric {numeric}", model.params.name(id));
            }
        }
    }
    report
}
