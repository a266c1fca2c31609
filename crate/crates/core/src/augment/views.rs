use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Scalar, Tensor};

/// Which views an image is turned into before encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    /// Left, right, top, bottom halves.
    FourSlices,
    /// Top and bottom halves.
    Horiz,
    /// Left and right halves.
    Vert,
    /// A single view of the whole image (random resized crop in training).
    Crop,
}

impl ViewMode {
    pub fn view_count(self) -> usize {
        match self {
            ViewMode::FourSlices => 4,
            ViewMode::Horiz | ViewMode::Vert => 2,
            ViewMode::Crop => 1,
        }
    }

    pub fn is_sliced(self) -> bool {
        self != ViewMode::Crop
    }
}

/// Ordered views derived from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet<T> {
    pub views: Vec<Tensor<T>>,
    pub mode: ViewMode,
}

impl<T: Scalar> ViewSet<T> {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> ViewSet<U> {
        ViewSet {
            views: self.views.iter().map(Tensor::cast).collect(),
            mode: self.mode,
        }
    }
}

/// Copies the rectangle `[top, top+h) × [left, left+w)`.
pub fn crop<T: Scalar>(image: &Tensor<T>, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let (c, ih, iw) = image.chw()?;
    if h == 0 || w == 0 || top + h > ih || left + w > iw {
        return Err(Error::dim(
            "crop",
            format!("rect {h}x{w} at ({top},{left}) outside {ih}x{iw}"),
        ));
    }
    let src = image.data();
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in top..top + h {
            let row = (ch * ih + y) * iw;
            out.extend_from_slice(&src[row + left..row + left + w]);
        }
    }
    Tensor::from_vec(&[c, h, w], out)
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear<T: Scalar>(image: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (c, h, w) = image.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim("resize", "zero output size"));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let ys = taps(out_h, h);
    let xs = taps(out_w, w);
    let src = image.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let base = ch * h * w;
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let p = |y: usize, x: usize| src[base + y * w + x].to_f64().unwrap();
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(T::lit(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// The four un-resized halves `[left, right, top, bottom]`.
pub fn half_slices<T: Scalar>(image: &Tensor<T>) -> Result<[Tensor<T>; 4]> {
    let (_, h, w) = image.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(
            "slice_views",
            format!("spatial axes (1,2) must be even, got {h}x{w}"),
        ));
    }
    Ok([
        crop(image, 0, 0, h, w / 2)?,
        crop(image, 0, w / 2, h, w / 2)?,
        crop(image, 0, 0, h / 2, w)?,
        crop(image, h / 2, 0, h / 2, w)?,
    ])
}

/// Fixed, input-independent slicing. Each view is resized to
/// `target_size × target_size`. `Crop` mode yields the whole image resized.
pub fn slice_views<T: Scalar>(image: &Tensor<T>, mode: ViewMode, target_size: usize) -> Result<ViewSet<T>> {
    let resize = |t: &Tensor<T>| resize_bilinear(t, target_size, target_size);
    let views = if mode == ViewMode::Crop {
        vec![resize(image)?]
    } else {
        let [left, right, top, bottom] = half_slices(image)?;
        let chosen = match mode {
            ViewMode::FourSlices => vec![left, right, top, bottom],
            ViewMode::Horiz => vec![top, bottom],
            ViewMode::Vert => vec![left, right],
            ViewMode::Crop => unreachable!(),
        };
        chosen.iter().map(resize).collect::<Result<_>>()?
    };
    Ok(ViewSet { views, mode })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Samples a crop covering a random area fraction in `scale` with aspect
/// ratio log-uniform in `aspect`. After 10 rejected draws, falls back to
/// the largest centered crop whose aspect lies in range.
pub fn sample_crop_rect<R: Rng + ?Sized>(
    h: usize,
    w: usize,
    scale: (f64, f64),
    aspect: (f64, f64),
    rng: &mut R,
) -> CropRect {
    let area = (h * w) as f64;
    let (log_lo, log_hi) = (aspect.0.ln(), aspect.1.ln());
    for _ in 0..10 {
        let target = area * uniform(rng, scale.0, scale.1);
        let ratio = uniform(rng, log_lo, log_hi).exp();
        let cw = (target * ratio).sqrt().round() as usize;
        let ch = (target / ratio).sqrt().round() as usize;
        if cw > 0 && ch > 0 && cw <= w && ch <= h {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            return CropRect {
                top,
                left,
                height: ch,
                width: cw,
            };
        }
    }
    let in_ratio = w as f64 / h as f64;
    let (cw, ch) = if in_ratio < aspect.0 {
        (w, ((w as f64 / aspect.0).round() as usize).clamp(1, h))
    } else if in_ratio > aspect.1 {
        (((h as f64 * aspect.1).round() as usize).clamp(1, w), h)
    } else {
        (w, h)
    };
    CropRect {
        top: (h - ch) / 2,
        left: (w - cw) / 2,
        height: ch,
        width: cw,
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub const DEFAULT_CROP_SCALE: (f64, f64) = (0.2, 1.0);
pub const DEFAULT_CROP_ASPECT: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);

pub fn random_resized_crop<R: Rng + ?Sized>(
    image: &Tensor<f32>,
    scale: (f64, f64),
    aspect: (f64, f64),
    rng: &mut R,
    target_size: usize,
) -> Result<Tensor<f32>> {
    let (_, h, w) = image.chw()?;
    if h < 8 || w < 8 {
        return Err(Error::dim("random_resized_crop", format!("image {h}x{w} smaller than 8x8")));
    }
    if !(scale.0 > 0.0 && scale.0 <= scale.1 && scale.1 <= 1.0) || !(aspect.0 > 0.0 && aspect.0 <= aspect.1) {
        return Err(Error::Argument(format!("invalid crop ranges scale={scale:?} aspect={aspect:?}")));
    }
    let r = sample_crop_rect(h, w, scale, aspect, rng);
    let cropped = crop(image, r.top, r.left, r.height, r.width)?;
    resize_bilinear(&cropped, target_size, target_size)
}
