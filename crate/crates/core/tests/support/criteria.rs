//! Measurements behind the acceptance criteria. Each returns what it saw so
//! callers can assert at the stated tolerance and report the margin.

use gamed_core::encoders::{constrain_kernel, EncoderConfig, ImagePatternEncoder};
use gamed_core::moe::{GatingMode, MmoePro};
use gamed_core::nn::{Ctx, Init};
use gamed_core::record::Image;
use gamed_core::refine::{adain, style_from_output, StyleMlps, StyleParams};
use gamed_core::Metrics;
use gamed_tensor::{ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

// ---- expert mixture ----

pub fn random_moe_case(seed: u64, tokens: bool) -> (MmoePro, ParamStore<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_in = rng.random_range(2..9);
    let n = rng.random_range(1..6);
    let l = if tokens { rng.random_range(1..8) } else { 1 };
    let mut store = ParamStore::new();
    let moe = MmoePro::new(&mut Init::seeded(&mut store, seed), "m", d_in, 6, 5, n, tokens);
    // non-zero biases so gates are genuinely affine
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".bias") {
            for v in store.get_mut(id).values_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }
    let f = (0..l).map(|_| (0..d_in).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    (moe, store, f)
}

pub fn as_tensor(rows: &[Vec<f64>]) -> Tensor<f64> {
    Tensor::new(vec![rows.len(), rows[0].len()], rows.concat()).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub struct MoeReport {
    pub cases: usize,
    /// Worst |mixture − naive loop| with raw gate weights.
    pub relaxed_worst: f64,
    pub negative_weights: usize,
    /// Worst |Σβ − 1| over multi-token inputs.
    pub beta_worst: f64,
    pub beta_negative: bool,
    /// Worst |mixture − naive softmax-gated loop|.
    pub classic_worst: f64,
}

pub fn moe_report() -> MoeReport {
    let cases = 1000;
    let mut r = MoeReport {
        cases,
        relaxed_worst: 0.0,
        negative_weights: 0,
        beta_worst: 0.0,
        beta_negative: false,
        classic_worst: 0.0,
    };
    for seed in 0..cases as u64 {
        let (moe, store, f) = random_moe_case(seed, seed % 3 != 0);
        let params = store.frozen();
        let tape = Tape::new();
        let out = moe.forward(&Ctx::new(&tape, &params), &as_tensor(&f), GatingMode::Pro).unwrap();
        let want = super::naive_moe(&params, &moe, &f, GatingMode::Pro);
        for t in 0..2 {
            for (g, w) in out.r[t].values().iter().zip(&want[t]) {
                r.relaxed_worst = r.relaxed_worst.max((g - w).abs());
            }
            r.negative_weights += out.weights[t].values().iter().filter(|&&w| w < 0.0).count();
        }
    }
    let mut seed = 0u64;
    let mut beta_cases = 0;
    while beta_cases < cases {
        let (moe, store, f) = random_moe_case(seed + 20_000, true);
        seed += 1;
        if f.len() < 2 {
            continue;
        }
        beta_cases += 1;
        let params = store.frozen();
        let tape = Tape::new();
        let out = moe.forward(&Ctx::new(&tape, &params), &as_tensor(&f), GatingMode::Pro).unwrap();
        let beta = out.beta.expect("token input in Pro mode");
        r.beta_negative |= beta.values().iter().any(|&b| b < 0.0);
        let s: f64 = beta.values().iter().sum();
        r.beta_worst = r.beta_worst.max((s - 1.0).abs());
    }
    for seed in 0..cases as u64 {
        let (moe, store, f) = random_moe_case(seed + 5000, seed % 2 == 0);
        let params = store.frozen();
        let tape = Tape::new();
        let out = moe.forward(&Ctx::new(&tape, &params), &as_tensor(&f), GatingMode::Classic).unwrap();
        let want = super::naive_moe(&params, &moe, &f, GatingMode::Classic);
        for t in 0..2 {
            for (g, w) in out.r[t].values().iter().zip(&want[t]) {
                r.classic_worst = r.classic_worst.max((g - w).abs());
            }
        }
    }
    r
}

// ---- AdaIN ----

/// Random `(r, μ, σ)` with `σ_r > 1e-3`; `uniform_sigma` makes every σ equal.
pub fn random_style_pair(rng: &mut ChaCha8Rng, d: usize, uniform_sigma: bool) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    loop {
        let scale = 10f32.powf(rng.random_range(-2.0..1.5));
        let r: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0..1.0) * scale + rng.random_range(-0.5..0.5)).collect();
        let r64: Vec<f64> = r.iter().map(|&v| v as f64).collect();
        if std(&r64) <= 1e-3 {
            continue;
        }
        let mu = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s0 = rng.random_range(0.01..4.0);
        let sigma = (0..d).map(|_| if uniform_sigma { s0 } else { rng.random_range(0.01..4.0) }).collect();
        return (r, mu, sigma);
    }
}

pub fn run_adain(r: &[f32], mu: &[f32], sigma: &[f32]) -> Vec<f64> {
    let tape = Tape::new();
    let ctx = Ctx::new(&tape, &[]);
    let row = |v: &[f32]| Tensor::row(v.to_vec()).unwrap();
    let style = StyleParams {
        mu: row(mu),
        sigma: row(sigma),
    };
    adain(&ctx, &row(r), &style).unwrap().to_f64_vec()
}

#[derive(Debug, Clone, Copy)]
pub struct AdainReport {
    pub cases: usize,
    /// Worst |mean(e) − mean(μ)| under a uniform σ.
    pub mean_worst: f64,
    /// Smallest cosine(e − μ, r − mean r) under a uniform σ.
    pub cosine_min: f64,
    /// Smallest cosine with a uniform μ as well, centring e by its own mean.
    pub flat_cosine_min: f64,
    /// Inverted style from O equals the plain style from −O, bit for bit.
    pub invert_bit_identical: bool,
}

pub fn adain_report() -> AdainReport {
    let cases = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut mean_worst = 0.0f64;
    for i in 0..cases {
        let d = [8, 16, 64][i % 3];
        // the mean only transfers exactly when every feature is scaled alike
        let (r, mu, sigma) = random_style_pair(&mut rng, d, true);
        let e = run_adain(&r, &mu, &sigma);
        let mu64: Vec<f64> = mu.iter().map(|&v| v as f64).collect();
        mean_worst = mean_worst.max((mean(&e) - mean(&mu64)).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let (mut cosine_min, mut flat_cosine_min) = (1.0f64, 1.0f64);
    for _ in 0..cases {
        let (r, mu, sigma) = random_style_pair(&mut rng, 32, true);
        let e = run_adain(&r, &mu, &sigma);
        let r64: Vec<f64> = r.iter().map(|&v| v as f64).collect();
        let m = mean(&r64);
        let rc: Vec<f64> = r64.iter().map(|v| v - m).collect();
        // centred by the style mean it was shifted to
        let ec: Vec<f64> = e.iter().zip(&mu).map(|(v, &u)| v - u as f64).collect();
        cosine_min = cosine_min.min(cosine(&ec, &rc));
        let flat = vec![mu[0]; 32];
        let e = run_adain(&r, &flat, &sigma);
        let em = mean(&e);
        let ec: Vec<f64> = e.iter().map(|v| v - em).collect();
        flat_cosine_min = flat_cosine_min.min(cosine(&ec, &rc));
    }
    AdainReport {
        cases,
        mean_worst,
        cosine_min,
        flat_cosine_min,
        invert_bit_identical: invert_is_negation(),
    }
}

fn invert_is_negation() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let bits = |t: &Tensor<f32>| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for seed in 0..50 {
        let mut store = ParamStore::<f32>::new();
        let mlps = StyleMlps::new(&mut Init::seeded(&mut store, seed), "s", 16, 12);
        let params = store.frozen();
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &params);
        for _ in 0..20 {
            let o: f32 = rng.random_range(-30.0..30.0);
            let a = style_from_output(&ctx, &mlps, &Tensor::full([1, 1], o), true).unwrap();
            let b = style_from_output(&ctx, &mlps, &Tensor::full([1, 1], -o), false).unwrap();
            if bits(&a.mu) != bits(&b.mu) || bits(&a.sigma) != bits(&b.sigma) {
                return false;
            }
        }
    }
    true
}

// ---- constrained convolution ----

pub fn surround_sum(kernel: &[f64]) -> f64 {
    let c = kernel.len() / 2;
    kernel.iter().enumerate().filter(|(i, _)| *i != c).map(|(_, v)| v).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct ConvReport {
    pub kernels: usize,
    /// Every projected centre is exactly −1.
    pub centre_exact: bool,
    pub surround_worst: f64,
    pub constant_images: usize,
    /// Largest |response| over constant images; the criterion wants exactly 0.
    pub constant_max_abs: f64,
}

pub fn conv_report() -> ConvReport {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let kernels = 2000;
    let (mut centre_exact, mut surround_worst) = (true, 0.0f64);
    for trial in 0..kernels {
        let k = [3, 5][trial % 2];
        let mut kernel: Vec<f64> = (0..k * k).map(|_| rng.random_range(-3.0..3.0)).collect();
        if trial % 7 == 0 {
            // surround summing to ~0 takes the uniform fallback
            let s = surround_sum(&kernel);
            kernel[0] -= s;
        }
        constrain_kernel(&mut kernel);
        centre_exact &= kernel[k * k / 2] == -1.0;
        surround_worst = surround_worst.max((surround_sum(&kernel) - 1.0).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut constant_images, mut constant_max_abs) = (0, 0.0f64);
    for seed in 0..20 {
        let (enc, store) = pattern_encoder(seed, [3, 5][seed as usize % 2], 4);
        let params = store.frozen();
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, &params);
        for _ in 0..10 {
            let img = Image::filled(12, 12, rng.random_range(0.0..1.0));
            let resp = enc.response(&ctx, &img).unwrap();
            constant_images += 1;
            constant_max_abs = resp.values().iter().fold(constant_max_abs, |m, v| m.max(v.abs()));
        }
    }
    ConvReport {
        kernels,
        centre_exact,
        surround_worst,
        constant_images,
        constant_max_abs,
    }
}

pub fn pattern_encoder(seed: u64, k: usize, channels: usize) -> (ImagePatternEncoder, ParamStore<f64>) {
    let cfg = EncoderConfig {
        kernel: k,
        ip_channels: channels,
        grid: 12,
        l_is: 4,
        ..Default::default()
    };
    let mut store = ParamStore::new();
    let enc = ImagePatternEncoder::new(&mut Init::seeded(&mut store, seed), &cfg);
    enc.constrain(store.get_mut(enc.kernel));
    (enc, store)
}

// ---- metrics ----

#[derive(Debug, Clone, Copy)]
pub struct MetricsReport {
    pub vectors: usize,
    pub mismatches: usize,
    pub closed_form_ok: bool,
}

pub fn metrics_report() -> MetricsReport {
    let m = Metrics::from_counts(3, 1, 5, 1);
    let closed_form_ok = (m.precision, m.recall, m.f1, m.accuracy) == (0.75, 0.75, 0.75, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let vectors = 100;
    let mut mismatches = 0;
    for _ in 0..vectors {
        let n = rng.random_range(1..300);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let m = Metrics::from_predictions(&preds, &labels).unwrap();
        let (tp, fp, tn, fn_) = super::count_confusion(&preds, &labels);
        let correct = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
        let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let same = (m.tp, m.fp, m.tn, m.fn_) == (tp, fp, tn, fn_)
            && m.accuracy == correct as f64 / n as f64
            && m.precision == p
            && m.recall == r
            && m.f1 == f1;
        mismatches += usize::from(!same);
    }
    MetricsReport {
        vectors,
        mismatches,
        closed_form_ok,
    }
}
