//! Toy modality encoders: token embeddings, patch embeddings, and a
//! constrained-convolution residual filter for image patterns.

use crate::error::{GamedError, Result};
use crate::nn::{Ctx, Init, Linear, Mlp};
use crate::record::Image;
use gamed_tensor::{ParamId, Scalar, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Reserved padding token.
pub const PAD_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentFlags {
    pub flip: bool,
    pub rotate: bool,
    pub scale: bool,
}

impl Default for AugmentFlags {
    fn default() -> Self {
        Self {
            flip: true,
            rotate: true,
            scale: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d: usize,
    pub hidden: usize,
    pub l_t: usize,
    pub l_is: usize,
    pub vocab: usize,
    pub grid: usize,
    pub kernel: usize,
    pub ip_channels: usize,
    pub d_ip: usize,
    pub augment: AugmentFlags,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d: 64,
            hidden: 64,
            l_t: 16,
            l_is: 16,
            vocab: 64,
            grid: 32,
            kernel: 3,
            ip_channels: 8,
            d_ip: 32,
            augment: AugmentFlags::default(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("d", self.d),
            ("hidden", self.hidden),
            ("l_t", self.l_t),
            ("l_is", self.l_is),
            ("vocab", self.vocab),
            ("grid", self.grid),
            ("kernel", self.kernel),
            ("ip_channels", self.ip_channels),
            ("d_ip", self.d_ip),
        ] {
            if v == 0 {
                return Err(GamedError::config(key, "must be positive"));
            }
        }
        if self.d < 2 {
            return Err(GamedError::config("d", "needs at least 2 features for instance statistics"));
        }
        if self.vocab < 2 {
            return Err(GamedError::config("vocab", "needs the pad id plus at least one token"));
        }
        let side = self.patches_per_side();
        if side * side != self.l_is {
            return Err(GamedError::config("l_is", "must be a perfect square (patch grid)"));
        }
        if self.grid % side != 0 {
            return Err(GamedError::config(
                "grid",
                format!("{} is not divisible into {side} patches per side", self.grid),
            ));
        }
        if self.kernel % 2 == 0 || self.kernel < 3 {
            return Err(GamedError::config("kernel", "must be odd and at least 3"));
        }
        if self.kernel > self.grid {
            return Err(GamedError::config("kernel", "exceeds the image grid"));
        }
        Ok(())
    }

    pub fn patches_per_side(&self) -> usize {
        (self.l_is as f64).sqrt().round() as usize
    }

    pub fn patch_len(&self) -> usize {
        let p = self.grid / self.patches_per_side();
        p * p
    }
}

/// Image-semantic augmentation, drawn once per sample in training mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    Identity,
    HFlip,
    Rot90,
    Scale(f32),
}

impl Augmentation {
    /// Uniform over identity and the enabled transforms; scale factors are uniform in [0.9, 1.1].
    pub fn sample<R: Rng>(flags: AugmentFlags, rng: &mut R) -> Self {
        let mut options = vec![Augmentation::Identity];
        if flags.flip {
            options.push(Augmentation::HFlip);
        }
        if flags.rotate {
            options.push(Augmentation::Rot90);
        }
        if flags.scale {
            options.push(Augmentation::Scale(1.0));
        }
        match options[rng.random_range(0..options.len())] {
            Augmentation::Scale(_) => Augmentation::Scale(rng.random_range(0.9..=1.1)),
            a => a,
        }
    }

    pub fn apply(&self, image: &Image) -> Image {
        let (h, w) = (image.height, image.width);
        match *self {
            Augmentation::Identity => image.clone(),
            Augmentation::HFlip => {
                let data = (0..h).flat_map(|y| (0..w).rev().map(move |x| (y, x))).map(|(y, x)| image.at(y, x));
                Image::new(h, w, data.collect())
            }
            // Counter-clockwise: output (y, x) reads input (x, w − 1 − y).
            Augmentation::Rot90 => {
                let data = (0..w).flat_map(|y| (0..h).map(move |x| (y, x))).map(|(y, x)| image.at(x, w - 1 - y));
                Image::new(w, h, data.collect())
            }
            Augmentation::Scale(s) => Image::new(h, w, image.data.iter().map(|v| v * s).collect()),
        }
    }
}

/// Non-overlapping patches, row-major over the patch grid, each flattened
/// row-major: returns `[per_side², patch_h·patch_w]` values.
pub fn extract_patches(image: &Image, per_side: usize) -> Result<Vec<f32>> {
    let (h, w) = (image.height, image.width);
    if per_side == 0 || h % per_side != 0 || w % per_side != 0 {
        return Err(GamedError::IndivisibleGrid {
            height: h,
            width: w,
            per_side,
        });
    }
    let (ph, pw) = (h / per_side, w / per_side);
    let mut out = Vec::with_capacity(h * w);
    for py in 0..per_side {
        for px in 0..per_side {
            for y in 0..ph {
                let row = (py * ph + y) * w + px * pw;
                out.extend_from_slice(&image.data[row..row + pw]);
            }
        }
    }
    Ok(out)
}

fn to_tensor<T: Scalar>(shape: Vec<usize>, values: &[f32]) -> Result<Tensor<T>> {
    Ok(Tensor::new(shape, values.iter().map(|&v| T::of(v as f64)).collect())?)
}

/// Validates an image against the configured grid before encoding.
pub fn check_image(image: &Image, cfg: &EncoderConfig) -> Result<()> {
    if image.height != cfg.grid || image.width != cfg.grid {
        return Err(GamedError::ImageShape {
            height: image.height,
            width: image.width,
            grid: cfg.grid,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub embedding: ParamId,
    pub mlp: Mlp,
    l_t: usize,
    vocab: usize,
}

impl TextEncoder {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &EncoderConfig) -> Self {
        Self {
            embedding: init.normal("text.embedding".into(), vec![cfg.vocab, cfg.d], 1.0),
            mlp: Mlp::new(init, "text.mlp", cfg.d, cfg.hidden, cfg.d),
            l_t: cfg.l_t,
            vocab: cfg.vocab,
        }
    }

    /// Pads with [`PAD_ID`] or truncates to `l_t` tokens.
    pub fn token_rows(&self, tokens: &[u32]) -> Result<Vec<usize>> {
        if let Some(&id) = tokens.iter().find(|&&id| id as usize >= self.vocab) {
            return Err(GamedError::OutOfVocabulary { id, vocab: self.vocab });
        }
        Ok((0..self.l_t)
            .map(|i| tokens.get(i).copied().unwrap_or(PAD_ID) as usize)
            .collect())
    }

    /// `f_t: [l_t, d]`.
    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, tokens: &[u32]) -> Result<Tensor<T>> {
        let rows = self.token_rows(tokens)?;
        let emb = ctx.tape.gather_rows(ctx.p(self.embedding), &rows)?;
        self.mlp.forward(ctx, &emb)
    }
}

#[derive(Debug, Clone)]
pub struct ImageSemanticEncoder {
    pub embed: Linear,
    pub mlp: Mlp,
    per_side: usize,
}

impl ImageSemanticEncoder {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &EncoderConfig) -> Self {
        Self {
            embed: Linear::new(init, "image_semantic.embed", cfg.patch_len(), cfg.d),
            mlp: Mlp::new(init, "image_semantic.mlp", cfg.d, cfg.hidden, cfg.d),
            per_side: cfg.patches_per_side(),
        }
    }

    /// Patch embeddings before the MLP: `[l_is, d]`.
    pub fn embed_patches<T: Scalar>(&self, ctx: &Ctx<'_, T>, image: &Image) -> Result<Tensor<T>> {
        let patches = extract_patches(image, self.per_side)?;
        let len = patches.len() / (self.per_side * self.per_side);
        let x = to_tensor(vec![self.per_side * self.per_side, len], &patches)?;
        self.embed.forward(ctx, &x)
    }

    /// `f_is: [l_is, d]`. The augmentation, if any, is applied to the grid first.
    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, image: &Image, augment: Option<Augmentation>) -> Result<Tensor<T>> {
        let x = match augment {
            Some(a) => self.embed_patches(ctx, &a.apply(image))?,
            None => self.embed_patches(ctx, image)?,
        };
        self.mlp.forward(ctx, &x)
    }
}

/// Projects one `k×k` kernel (row-major) onto the constraint set: centre −1,
/// surround rescaled to sum to 1, or reset to uniform when its sum is ~0.
/// Kernels already within 1e-6 of the set are returned unchanged.
pub fn constrain_kernel<T: Scalar>(kernel: &mut [T]) {
    let k2 = kernel.len();
    let centre = k2 / 2;
    let sum: T = kernel.iter().enumerate().filter(|(i, _)| *i != centre).map(|(_, v)| *v).sum();
    if kernel[centre] == -T::one() && (sum - T::one()).abs() <= T::of(1e-6) {
        // already on the constraint set; leave the bits alone
        return;
    }
    if sum.abs() > T::of(1e-8) {
        for (i, v) in kernel.iter_mut().enumerate() {
            if i != centre {
                *v = *v / sum;
            }
        }
    } else {
        let u = T::one() / T::of((k2 - 1) as f64);
        for (i, v) in kernel.iter_mut().enumerate() {
            if i != centre {
                *v = u;
            }
        }
    }
    kernel[centre] = -T::one();
}

/// Differences `x_j − x_centre` for every non-centre tap of every valid
/// window: `[positions, k² − 1]` values, windows row-major.
///
/// With a constrained kernel (centre −1, surround summing to 1) the
/// convolution equals these residuals times the surround weights, so a
/// constant image gives exactly zero.
pub fn residual_windows(image: &Image, k: usize) -> Result<Vec<f32>> {
    let (h, w) = (image.height, image.width);
    if k > h || k > w {
        return Err(GamedError::KernelTooLarge {
            kernel: k,
            height: h,
            width: w,
        });
    }
    let r = k / 2;
    let mut out = Vec::with_capacity((h - k + 1) * (w - k + 1) * (k * k - 1));
    for y in r..h - r {
        for x in r..w - r {
            let c = image.at(y, x);
            for dy in 0..k {
                for dx in 0..k {
                    if dy == r && dx == r {
                        continue;
                    }
                    out.push(image.at(y + dy - r, x + dx - r) - c);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ImagePatternEncoder {
    /// `[k², channels]`: column `c` is channel `c`'s kernel, row-major.
    pub kernel: ParamId,
    pub mlp: Mlp,
    k: usize,
    channels: usize,
}

impl ImagePatternEncoder {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &EncoderConfig) -> Self {
        Self {
            kernel: init.uniform("image_pattern.kernel".into(), vec![cfg.kernel * cfg.kernel, cfg.ip_channels], 0.0, 1.0),
            mlp: Mlp::new(init, "image_pattern.mlp", cfg.ip_channels, cfg.hidden, cfg.d_ip),
            k: cfg.kernel,
            channels: cfg.ip_channels,
        }
    }

    /// Projects every channel of the stored kernel onto the constraint set.
    pub fn constrain<T: Scalar>(&self, kernel: &mut Tensor<T>) {
        let (k2, c) = (self.k * self.k, self.channels);
        let values = kernel.values_mut();
        let mut column = vec![T::zero(); k2];
        for ch in 0..c {
            for i in 0..k2 {
                column[i] = values[i * c + ch];
            }
            constrain_kernel(&mut column);
            for i in 0..k2 {
                values[i * c + ch] = column[i];
            }
        }
    }

    /// Valid-padding convolution response, `[positions, channels]`.
    pub fn response<T: Scalar>(&self, ctx: &Ctx<'_, T>, image: &Image) -> Result<Tensor<T>> {
        let windows = residual_windows(image, self.k)?;
        let taps = self.k * self.k - 1;
        let x = to_tensor(vec![windows.len() / taps, taps], &windows)?;
        let centre = self.k * self.k / 2;
        let surround: Vec<usize> = (0..self.k * self.k).filter(|&i| i != centre).collect();
        let w = ctx.tape.gather_rows(ctx.p(self.kernel), &surround)?;
        Ok(ctx.tape.matmul(&x, &w)?)
    }

    /// `f_ip: [1, d_ip]`.
    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, image: &Image) -> Result<Tensor<T>> {
        let resp = ctx.tape.silu(&self.response(ctx, image)?);
        let pooled = ctx.tape.mean_axis(&resp, 0)?;
        self.mlp.forward(ctx, &pooled)
    }
}

/// `r_ip = SiLU(Linear(f_ip))`.
#[derive(Debug, Clone)]
pub struct IpProjection {
    pub linear: Linear,
}

impl IpProjection {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &EncoderConfig) -> Self {
        Self {
            linear: Linear::new(init, "project_ip", cfg.d_ip, cfg.d),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &Ctx<'_, T>, f_ip: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(ctx.tape.silu(&self.linear.forward(ctx, f_ip)?))
    }
}
