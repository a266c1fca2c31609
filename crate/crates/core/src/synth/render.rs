use rand::Rng;

use super::style::{Locality, StyleSpec};
use crate::color::{hsv_to_rgb, luma};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::rng::rng_for;

/// Number of hues in the fixed palette.
pub const PALETTE_SIZE: usize = 8;

/// Foreground luma shared by every palette entry. Pure blue tops out at
/// 0.114, so every saturated hue can be scaled to this value.
const FG_LUMA: f64 = 0.1;
/// White fraction of the background tint.
const BG_WHITE: f64 = 0.72;

/// Supersampling factor per axis.
const SUPERSAMPLE: usize = 3;

/// `(foreground, background)` RGB for a palette entry. Hues are evenly
/// spaced at full saturation; all entries share the same foreground and
/// background luma, so a grayscale render does not depend on the color.
pub fn palette(color_id: u32) -> Result<([f64; 3], [f64; 3])> {
    if color_id as usize >= PALETTE_SIZE {
        return Err(Error::Index(format!(
            "color_id {color_id} outside palette of {PALETTE_SIZE}"
        )));
    }
    let pure = hsv_to_rgb([color_id as f64 / PALETTE_SIZE as f64, 1.0, 1.0]);
    let k = FG_LUMA / luma(pure);
    let fg = pure.map(|c| c * k);
    let bg = fg.map(|c| BG_WHITE + (1.0 - BG_WHITE) * c);
    Ok((fg, bg))
}

/// Per-sample geometric jitter: translation as a fraction of the side and
/// isotropic scale about the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nuisance {
    pub dx: f64,
    pub dy: f64,
    pub scale: f64,
}

impl Nuisance {
    pub const MAX_SHIFT: f64 = 0.08;
    pub const SCALE_RANGE: (f64, f64) = (0.95, 1.05);

    pub fn none() -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            scale: 1.0,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x4e55_4953]);
        Self {
            dx: rng.random_range(-Self::MAX_SHIFT..=Self::MAX_SHIFT),
            dy: rng.random_range(-Self::MAX_SHIFT..=Self::MAX_SHIFT),
            scale: rng.random_range(Self::SCALE_RANGE.0..=Self::SCALE_RANGE.1),
        }
    }
}

/// One rendered image with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[3, H, W]`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub style_id: u32,
    pub color_id: u32,
    pub nuisance_seed: u64,
}

pub fn render_sample(style: &StyleSpec, color_id: u32, nuisance_seed: u64, image_size: usize) -> Result<Sample> {
    render_with(style, color_id, Nuisance::from_seed(nuisance_seed), nuisance_seed, image_size)
}

pub fn render_with(
    style: &StyleSpec,
    color_id: u32,
    nuisance: Nuisance,
    nuisance_seed: u64,
    image_size: usize,
) -> Result<Sample> {
    if image_size < 8 {
        return Err(Error::Argument(format!("image_size {image_size} < 8")));
    }
    let (fg, bg) = palette(color_id)?;
    let coverage = coverage_map(style, nuisance, image_size);
    let plane = image_size * image_size;
    let mut data = vec![0f32; 3 * plane];
    for (i, &cov) in coverage.iter().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = (bg[c] + cov * (fg[c] - bg[c])) as f32;
        }
    }
    Ok(Sample {
        image: Tensor::from_vec(&[3, image_size, image_size], data)?,
        style_id: style.style_id,
        color_id,
        nuisance_seed,
    })
}

/// Fraction of each pixel covered by the pattern.
fn coverage_map(style: &StyleSpec, nuisance: Nuisance, size: usize) -> Vec<f64> {
    let (x0, y0, x1, y1) = style.locality.rect();
    let (rw, rh) = (x1 - x0, y1 - y0);
    let n = size as f64;
    let sub = SUPERSAMPLE as f64;
    let mut out = Vec::with_capacity(size * size);
    for py in 0..size {
        for px in 0..size {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let ux = (px as f64 + (sx as f64 + 0.5) / sub) / n;
                    let uy = (py as f64 + (sy as f64 + 0.5) / sub) / n;
                    if style.locality != Locality::Global && !(ux >= x0 && ux < x1 && uy >= y0 && uy < y1) {
                        continue;
                    }
                    // undo the nuisance transform, then map into the region frame
                    let tx = (ux - 0.5 - nuisance.dx) / nuisance.scale + 0.5;
                    let ty = (uy - 0.5 - nuisance.dy) / nuisance.scale + 0.5;
                    let lx = (tx - x0) / rw - 0.5;
                    let ly = (ty - y0) / rh - 0.5;
                    if style.covers(lx, ly) {
                        hits += 1;
                    }
                }
            }
            out.push(hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64);
        }
    }
    out
}

/// Rec. 601 grayscale of a `[3, H, W]` image, as a flat `H·W` vector.
pub fn grayscale(image: &Tensor<f32>) -> Vec<f64> {
    let plane = image.len() / 3;
    let d = image.data();
    (0..plane)
        .map(|i| luma([d[i] as f64, d[plane + i] as f64, d[2 * plane + i] as f64]))
        .collect()
}
