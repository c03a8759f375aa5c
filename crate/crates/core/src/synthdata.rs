//! Synthetic multimodal records with planted, per-branch label signal.

use crate::encoders::PAD_ID;
use crate::error::{GamedError, Result};
use crate::record::{Image, NewsRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Probability that a non-cue token is drawn from the text topic's block.
const TOPIC_MASS: f64 = 0.6;
const TEMPLATE_AMPLITUDE: f64 = 0.2;
const TEMPLATE_CYCLES: f64 = 2.0;
const BLOBS: usize = 2;
const BLOB_AMPLITUDE: f64 = 0.15;
/// Per-image sensor-noise level is uniform in `[0, PIXEL_NOISE_MAX]`, so
/// high-frequency energy alone does not give the checkerboard away.
const PIXEL_NOISE_MAX: f64 = 0.2;
/// Every image carries a benign checkerboard texture of amplitude uniform in
/// `[0, TEXTURE_MAX]`; fakes add `pattern_signal` on top, so the two classes
/// overlap instead of being separable by a matched filter.
const TEXTURE_MAX: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Fraction of fake (label 1) records in every split.
    pub fake_fraction: f64,
    /// Per-token probability that a fake record's token is a fake-cue word.
    pub text_signal: f64,
    /// Amplitude of the checkerboard added to fake images.
    pub pattern_signal: f64,
    /// P(c = 1 | y = 1): image topic matches text topic.
    pub consistency_rate_fake: f64,
    /// P(c = 1 | y = 0).
    pub consistency_rate_real: f64,
    pub topics: usize,
    pub vocab: usize,
    pub grid: usize,
    /// Maximum text length; lengths are uniform in `[max(1, len/2), len]`.
    pub text_len: usize,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            fake_fraction: 0.5,
            text_signal: 0.3,
            pattern_signal: 0.15,
            consistency_rate_fake: 0.3,
            consistency_rate_real: 0.9,
            topics: 4,
            vocab: 64,
            grid: 32,
            text_len: 16,
            seed: 0,
        }
    }
}

/// How token ids are partitioned: topic blocks, fake-cue words, general words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLayout {
    pub topics: usize,
    pub topic_block: usize,
    pub cue_start: u32,
    pub cues: usize,
    pub vocab: usize,
}

impl TokenLayout {
    pub fn new(vocab: usize, topics: usize) -> Result<Self> {
        let usable = vocab.saturating_sub(1);
        let topic_block = usable * 3 / 4 / topics.max(1);
        let cues = (usable / 8).max(1);
        if topics == 0 || topic_block == 0 || topics * topic_block + cues > usable {
            return Err(GamedError::config("vocab", format!("{vocab} is too small for {topics} topics")));
        }
        Ok(Self {
            topics,
            topic_block,
            cue_start: 1 + (topics * topic_block) as u32,
            cues,
            vocab,
        })
    }

    pub fn topic_words(&self, topic: usize) -> std::ops::Range<u32> {
        let start = 1 + (topic * self.topic_block) as u32;
        start..start + self.topic_block as u32
    }

    pub fn cue_words(&self) -> std::ops::Range<u32> {
        self.cue_start..self.cue_start + self.cues as u32
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        for (key, n) in [("n_train", self.n_train), ("n_val", self.n_val), ("n_test", self.n_test)] {
            if n == 0 {
                return Err(GamedError::config(key, "must be positive"));
            }
        }
        for (key, r) in [
            ("fake_fraction", self.fake_fraction),
            ("text_signal", self.text_signal),
            ("consistency_rate_fake", self.consistency_rate_fake),
            ("consistency_rate_real", self.consistency_rate_real),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(GamedError::config(key, format!("{r} is outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.pattern_signal) {
            return Err(GamedError::config("pattern_signal", "must lie in [0, 1]"));
        }
        if self.topics < 2 {
            return Err(GamedError::config("topics", "needs at least 2 topics"));
        }
        if self.grid < 3 {
            return Err(GamedError::config("grid", "must be at least 3"));
        }
        if self.text_len == 0 {
            return Err(GamedError::config("text_len", "must be positive"));
        }
        TokenLayout::new(self.vocab, self.topics)?;
        Ok(())
    }

    /// Sets both class-conditional consistency rates.
    pub fn with_consistency_rate(mut self, rate: f64) -> Self {
        self.consistency_rate_fake = rate;
        self.consistency_rate_real = rate;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<NewsRecord>,
    pub val: Vec<NewsRecord>,
    pub test: Vec<NewsRecord>,
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// Topic template: a sinusoid whose orientation encodes the topic.
fn template(topic: usize, topics: usize, grid: usize, phase: f64) -> Vec<f64> {
    let angle = PI * topic as f64 / topics as f64;
    let (c, s) = (angle.cos(), angle.sin());
    let k = 2.0 * PI * TEMPLATE_CYCLES / grid as f64;
    (0..grid * grid)
        .map(|i| {
            let (y, x) = ((i / grid) as f64, (i % grid) as f64);
            0.5 + TEMPLATE_AMPLITUDE * (k * (x * c + y * s) + phase).sin()
        })
        .collect()
}

fn gen_image(rng: &mut ChaCha8Rng, spec: &GenSpec, topic: usize, fake: bool) -> Image {
    let g = spec.grid;
    let mut px = template(topic, spec.topics, g, rng.random_range(0.0..2.0 * PI));
    for _ in 0..BLOBS {
        let (cy, cx) = (rng.random_range(0.0..g as f64), rng.random_range(0.0..g as f64));
        let sigma: f64 = rng.random_range(2.0..4.0);
        let amp = rng.random_range(-BLOB_AMPLITUDE..BLOB_AMPLITUDE);
        for (i, v) in px.iter_mut().enumerate() {
            let (y, x) = ((i / g) as f64, (i % g) as f64);
            let r2 = (y - cy).powi(2) + (x - cx).powi(2);
            *v += amp * (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let noise = Normal::new(0.0, rng.random_range(0.0..PIXEL_NOISE_MAX)).expect("finite std");
    let parity = rng.random_range(0..2usize);
    let mut amplitude = rng.random_range(0.0..TEXTURE_MAX);
    if fake {
        amplitude += spec.pattern_signal;
    }
    for (i, v) in px.iter_mut().enumerate() {
        let sign = if (i / g + i % g + parity) % 2 == 0 { 1.0 } else { -1.0 };
        *v += noise.sample(rng) + sign * amplitude;
    }
    Image::new(g, g, px.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect())
}

fn gen_text(rng: &mut ChaCha8Rng, spec: &GenSpec, layout: &TokenLayout, topic: usize, fake: bool) -> Vec<u32> {
    let len = rng.random_range((spec.text_len / 2).max(1)..=spec.text_len);
    (0..len)
        .map(|_| {
            if fake && rng.random_bool(spec.text_signal) {
                rng.random_range(layout.cue_words())
            } else if rng.random_bool(TOPIC_MASS) {
                rng.random_range(layout.topic_words(topic))
            } else {
                rng.random_range(PAD_ID + 1..spec.vocab as u32)
            }
        })
        .collect()
}

/// One record from its own stream: topic, consistency draw, text, image.
fn gen_record(spec: &GenSpec, layout: &TokenLayout, id: String, label: u8, rng: &mut ChaCha8Rng) -> NewsRecord {
    let fake = label == 1;
    let topic = rng.random_range(0..spec.topics);
    let rate = if fake {
        spec.consistency_rate_fake
    } else {
        spec.consistency_rate_real
    };
    let consistent = rng.random_bool(rate);
    let image_topic = if consistent {
        topic
    } else {
        (topic + rng.random_range(1..spec.topics)) % spec.topics
    };
    let text = gen_text(rng, spec, layout, topic, fake);
    let image = gen_image(rng, spec, image_topic, fake);
    NewsRecord {
        id,
        text,
        image,
        label,
        consistency: Some(u8::from(consistent)),
    }
}

fn stream(seed: u64, split: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((split as u64) << 40) | index);
    rng
}

fn gen_split(spec: &GenSpec, layout: &TokenLayout, split: usize, n: usize) -> Vec<NewsRecord> {
    let n_fake = (n as f64 * spec.fake_fraction).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_fake)).collect();
    labels.shuffle(&mut stream(spec.seed, split, 1 << 39));
    labels
        .into_iter()
        .enumerate()
        .map(|(i, y)| {
            let id = format!("{}-{i:05}", SPLIT_NAMES[split]);
            gen_record(spec, layout, id, y, &mut stream(spec.seed, split, i as u64))
        })
        .collect()
}

/// Generates the three splits. Every record draws from its own stream
/// derived from `(seed, split, index)`; label counts are exact per split.
pub fn generate(spec: &GenSpec) -> Result<Splits> {
    spec.validate()?;
    let layout = TokenLayout::new(spec.vocab, spec.topics)?;
    Ok(Splits {
        train: gen_split(spec, &layout, 0, spec.n_train),
        val: gen_split(spec, &layout, 1, spec.n_val),
        test: gen_split(spec, &layout, 2, spec.n_test),
    })
}
