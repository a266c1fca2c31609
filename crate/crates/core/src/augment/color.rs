use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::color::{hsv_to_rgb, rgb_to_hsv, LUMA};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Color distortion applied before slicing: jitter, then grayscale, then
/// blur, each with its own probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Maximum hue rotation in turns.
    pub hue: f64,
    pub p_jitter: f64,
    pub p_grayscale: f64,
    pub p_blur: f64,
    pub blur_sigma: (f64, f64),
}

impl DistortionConfig {
    /// Jitter strengths `(0.8s, 0.8s, 0.8s, 0.2s)`.
    pub fn with_strength(s: f64) -> Self {
        Self {
            brightness: 0.8 * s,
            contrast: 0.8 * s,
            saturation: 0.8 * s,
            hue: 0.2 * s,
            p_jitter: 0.8,
            p_grayscale: 0.2,
            p_blur: 0.5,
            blur_sigma: (1.0, 2.0),
        }
    }

    /// Every probability zero: the distortion is the identity.
    pub fn disabled() -> Self {
        Self {
            p_jitter: 0.0,
            p_grayscale: 0.0,
            p_blur: 0.0,
            ..Self::with_strength(1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_jitter", self.p_jitter),
            ("p_grayscale", self.p_grayscale),
            ("p_blur", self.p_blur),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, s) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
            ("hue", self.hue),
        ] {
            if !(s >= 0.0) {
                return Err(Error::Argument(format!("{name} strength {s} is negative")));
            }
        }
        if self.hue > 0.5 {
            return Err(Error::Argument(format!("hue strength {} exceeds half a turn", self.hue)));
        }
        let (lo, hi) = self.blur_sigma;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Argument(format!("invalid blur sigma range ({lo}, {hi})")));
        }
        Ok(())
    }
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self::with_strength(1.0)
    }
}

fn check_image(image: &Tensor<f32>) -> Result<usize> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::dim("color_distort", format!("expected 3 channels on axis 0, got {c}")));
    }
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("pixel value {v} outside [0, 1]")));
    }
    Ok(h * w)
}

/// Applies jitter (sub-operations in random order), random grayscale and
/// random Gaussian blur. Output is clamped to `[0, 1]`.
pub fn color_distort<R: Rng + ?Sized>(image: &Tensor<f32>, cfg: &DistortionConfig, rng: &mut R) -> Result<Tensor<f32>> {
    cfg.validate()?;
    check_image(image)?;
    let mut out = image.clone();
    if rng.random_bool(cfg.p_jitter) {
        let mut order = [0usize, 1, 2, 3];
        order.shuffle(rng);
        for op in order {
            match op {
                0 => {
                    let f = factor(rng, cfg.brightness);
                    adjust_brightness(&mut out, f);
                }
                1 => {
                    let f = factor(rng, cfg.contrast);
                    adjust_contrast(&mut out, f);
                }
                2 => {
                    let f = factor(rng, cfg.saturation);
                    adjust_saturation(&mut out, f);
                }
                _ => {
                    let d = if cfg.hue > 0.0 {
                        rng.random_range(-cfg.hue..=cfg.hue)
                    } else {
                        0.0
                    };
                    adjust_hue(&mut out, d);
                }
            }
        }
    }
    if rng.random_bool(cfg.p_grayscale) {
        to_grayscale(&mut out);
    }
    if rng.random_bool(cfg.p_blur) {
        let (lo, hi) = cfg.blur_sigma;
        let sigma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        out = gaussian_blur(&out, sigma)?;
    }
    Ok(out)
}

fn factor<R: Rng + ?Sized>(rng: &mut R, strength: f64) -> f64 {
    if strength <= 0.0 {
        return 1.0;
    }
    rng.random_range((1.0 - strength).max(0.0)..=1.0 + strength)
}

fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

fn luma_plane(image: &Tensor<f32>) -> Vec<f64> {
    let plane = image.len() / 3;
    let d = image.data();
    (0..plane)
        .map(|i| LUMA[0] * d[i] as f64 + LUMA[1] * d[plane + i] as f64 + LUMA[2] * d[2 * plane + i] as f64)
        .collect()
}

pub fn adjust_brightness(image: &mut Tensor<f32>, factor: f64) {
    for v in image.data_mut() {
        *v = clamp01(*v as f64 * factor);
    }
}

/// Blend toward the mean luminance of the whole image.
pub fn adjust_contrast(image: &mut Tensor<f32>, factor: f64) {
    let gray = luma_plane(image);
    let mean = gray.iter().sum::<f64>() / gray.len() as f64;
    for v in image.data_mut() {
        *v = clamp01(factor * *v as f64 + (1.0 - factor) * mean);
    }
}

/// Blend toward each pixel's own luminance.
pub fn adjust_saturation(image: &mut Tensor<f32>, factor: f64) {
    let gray = luma_plane(image);
    let plane = gray.len();
    for (i, v) in image.data_mut().iter_mut().enumerate() {
        *v = clamp01(factor * *v as f64 + (1.0 - factor) * gray[i % plane]);
    }
}

/// Rotates hue by `delta` turns in HSV space.
pub fn adjust_hue(image: &mut Tensor<f32>, delta: f64) {
    if delta == 0.0 {
        return;
    }
    let plane = image.len() / 3;
    let d = image.data_mut();
    for i in 0..plane {
        let [h, s, v] = rgb_to_hsv([d[i] as f64, d[plane + i] as f64, d[2 * plane + i] as f64]);
        let rgb = hsv_to_rgb([h + delta, s, v]);
        for c in 0..3 {
            d[c * plane + i] = clamp01(rgb[c]);
        }
    }
}

/// Replaces every channel by the Rec. 601 luma.
pub fn to_grayscale(image: &mut Tensor<f32>) {
    let gray = luma_plane(image);
    let plane = gray.len();
    let d = image.data_mut();
    for (i, g) in gray.iter().enumerate() {
        let g = clamp01(*g);
        d[i] = g;
        d[plane + i] = g;
        d[2 * plane + i] = g;
    }
}

/// Normalized 1-D taps `[k(-1), k(0), k(1)]` of a Gaussian; the 3×3 kernel
/// is their outer product.
pub fn gaussian_taps(sigma: f64) -> [f64; 3] {
    let side = (-1.0 / (2.0 * sigma * sigma)).exp();
    let total = 1.0 + 2.0 * side;
    [side / total, 1.0 / total, side / total]
}

/// 3×3 Gaussian blur with reflect padding.
pub fn gaussian_blur(image: &Tensor<f32>, sigma: f64) -> Result<Tensor<f32>> {
    let (c, h, w) = image.chw()?;
    if h < 2 || w < 2 {
        return Err(Error::dim("gaussian_blur", format!("image {h}x{w} too small to reflect-pad")));
    }
    let k = gaussian_taps(sigma);
    let reflect = |i: isize, n: usize| -> usize {
        if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * n - 2 - i as usize
        } else {
            i as usize
        }
    };
    let src = image.data();
    let mut tmp = vec![0f64; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let xx = reflect(x as isize + t as isize - 1, w);
                    acc += kv * src[(ch * h + y) * w + xx] as f64;
                }
                tmp[(ch * h + y) * w + x] = acc;
            }
        }
    }
    let mut out = vec![0f32; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let yy = reflect(y as isize + t as isize - 1, h);
                    acc += kv * tmp[(ch * h + yy) * w + x];
                }
                out[(ch * h + y) * w + x] = clamp01(acc);
            }
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}
