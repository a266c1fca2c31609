use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::manifest::{save_png, Manifest, ManifestRecord};
use super::render::{render_sample, PALETTE_SIZE};
use super::style::StyleSpec;
use crate::error::{Error, Result};
use crate::rng::{mix, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_styles: u32,
    pub n_colors: u32,
    pub per_pair: u32,
    pub image_size: usize,
    /// Fraction of styles whose pattern is confined to one image half.
    pub locality_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_styles: 40,
            n_colors: 4,
            per_pair: 1,
            image_size: 64,
            locality_fraction: 0.5,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_styles < 2 || self.n_colors < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 styles and 2 colors, got {} and {}",
                self.n_styles, self.n_colors
            )));
        }
        if self.n_colors as usize > PALETTE_SIZE {
            return Err(Error::Argument(format!(
                "n_colors {} exceeds palette size {PALETTE_SIZE}",
                self.n_colors
            )));
        }
        if self.per_pair == 0 {
            return Err(Error::Argument("per_pair must be positive".into()));
        }
        if self.image_size < 32 || !self.image_size.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "image_size must be even and >= 32, got {}",
                self.image_size
            )));
        }
        if !(0.0..=1.0).contains(&self.locality_fraction) {
            return Err(Error::Argument(format!(
                "locality_fraction {} outside [0, 1]",
                self.locality_fraction
            )));
        }
        Ok(())
    }

    /// Style specs for the whole corpus. Exactly
    /// `round(locality_fraction · n_styles)` styles are local.
    pub fn styles(&self) -> Vec<StyleSpec> {
        let n_local = (self.locality_fraction * self.n_styles as f64).round() as usize;
        let mut order: Vec<u32> = (0..self.n_styles).collect();
        order.shuffle(&mut rng_for(self.seed, &[0x4c4f_4341]));
        let mut local = vec![false; self.n_styles as usize];
        for &s in &order[..n_local] {
            local[s as usize] = true;
        }
        (0..self.n_styles)
            .map(|s| StyleSpec::generate(s, self.seed, local[s as usize]))
            .collect()
    }

    pub fn nuisance_seed(&self, sample_index: usize) -> u64 {
        mix(self.seed, &[0x5341_4d50, sample_index as u64])
    }
}

/// Renders the corpus into `out_dir/images/` and writes the manifest.
pub fn generate_corpus(config: &CorpusConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let images = out_dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;

    let styles = config.styles();
    let mut records = Vec::new();
    for style in &styles {
        for color in 0..config.n_colors {
            for k in 0..config.per_pair {
                let index = records.len();
                let sample = render_sample(style, color, config.nuisance_seed(index), config.image_size)?;
                let rel = format!("images/s{:03}_c{}_{}.png", style.style_id, color, k);
                save_png(&sample.image, out_dir.join(&rel))?;
                records.push(ManifestRecord {
                    path: rel,
                    style_id: Some(style.style_id),
                    color_id: Some(color),
                });
            }
        }
    }
    let mut manifest = Manifest::new(out_dir, records)?;
    manifest.corpus = Some(config.clone());
    manifest.save(out_dir)?;
    log::info!("generated {} images in {}", manifest.len(), out_dir.display());
    Ok(manifest)
}
