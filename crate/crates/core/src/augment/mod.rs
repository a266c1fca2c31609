//! Training-time views: color distortion, fixed half-image slicing, and the
//! random-resized-crop view used by the single-view baseline.

mod color;
mod views;

pub use color::{
    adjust_brightness, adjust_contrast, adjust_hue, adjust_saturation, color_distort, gaussian_blur,
    gaussian_taps, to_grayscale, DistortionConfig,
};
pub use views::{
    crop, half_slices, random_resized_crop, resize_bilinear, sample_crop_rect, slice_views, CropRect, ViewMode,
    ViewSet, DEFAULT_CROP_ASPECT, DEFAULT_CROP_SCALE,
};
