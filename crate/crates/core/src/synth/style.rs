use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Stripes,
    Checks,
    Dots,
    Blobs,
    GlyphBand,
}

impl PatternKind {
    pub const ALL: [PatternKind; 5] = [
        PatternKind::Stripes,
        PatternKind::Checks,
        PatternKind::Dots,
        PatternKind::Blobs,
        PatternKind::GlyphBand,
    ];
}

/// Image region a style's pattern is confined to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Global,
    TopHalf,
    BottomHalf,
    LeftHalf,
    RightHalf,
}

impl Locality {
    pub const LOCAL: [Locality; 4] = [
        Locality::TopHalf,
        Locality::BottomHalf,
        Locality::LeftHalf,
        Locality::RightHalf,
    ];

    /// `(x0, y0, x1, y1)` in unit image coordinates.
    pub fn rect(self) -> (f64, f64, f64, f64) {
        match self {
            Locality::Global => (0.0, 0.0, 1.0, 1.0),
            Locality::TopHalf => (0.0, 0.0, 1.0, 0.5),
            Locality::BottomHalf => (0.0, 0.5, 1.0, 1.0),
            Locality::LeftHalf => (0.0, 0.0, 0.5, 1.0),
            Locality::RightHalf => (0.5, 0.0, 1.0, 1.0),
        }
    }
}

/// Geometry of one design. Everything here is a function of
/// `(style_id, generator_seed)` only.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleSpec {
    pub style_id: u32,
    pub pattern_kind: PatternKind,
    /// Repetitions across the pattern domain.
    pub frequency: f64,
    /// Radians.
    pub angle: f64,
    /// Fill fraction parameter in (0, 1).
    pub density: f64,
    pub locality: Locality,
    /// Free-form layout elements (blob discs or glyph bitmaps).
    pub elements: Vec<[f64; 3]>,
    pub glyph_bits: Vec<bool>,
}

const GLYPH_W: usize = 3;
const GLYPH_H: usize = 5;

impl StyleSpec {
    /// Derives a style. `local` selects a half-image locality, chosen at
    /// random among the four halves.
    pub fn generate(style_id: u32, generator_seed: u64, local: bool) -> Self {
        let mut rng = rng_for(generator_seed, &[0x5354_594c, style_id as u64]);
        let pattern_kind = PatternKind::ALL[style_id as usize % PatternKind::ALL.len()];
        let locality = if local {
            Locality::LOCAL[rng.random_range(0..4)]
        } else {
            Locality::Global
        };
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let (frequency, density) = match pattern_kind {
            PatternKind::Stripes => (rng.random_range(2.5..7.0), rng.random_range(0.3..0.6)),
            PatternKind::Checks => (rng.random_range(2.0..5.0), 0.5),
            PatternKind::Dots => (rng.random_range(2.5..5.5), rng.random_range(0.25..0.42)),
            PatternKind::Blobs => (rng.random_range(3.0f64..7.0).floor(), rng.random_range(0.1..0.2)),
            PatternKind::GlyphBand => (rng.random_range(3.0f64..6.0).floor(), rng.random_range(0.28..0.45)),
        };
        let mut elements = Vec::new();
        let mut glyph_bits = Vec::new();
        match pattern_kind {
            PatternKind::Blobs => {
                for _ in 0..frequency as usize {
                    elements.push([
                        rng.random_range(-0.35..0.35),
                        rng.random_range(-0.35..0.35),
                        density * rng.random_range(0.7..1.4),
                    ]);
                }
            }
            PatternKind::GlyphBand => {
                // band offset across its normal, in [-0.25, 0.25]
                elements.push([rng.random_range(-0.25..0.25), 0.0, 0.0]);
                let glyphs = frequency as usize;
                glyph_bits = (0..glyphs * GLYPH_W * GLYPH_H)
                    .map(|_| rng.random_bool(0.55))
                    .collect();
            }
            _ => {}
        }
        Self {
            style_id,
            pattern_kind,
            frequency,
            angle,
            density,
            locality,
            elements,
            glyph_bits,
        }
    }

    /// Pattern coverage (0 or 1) at centered pattern coordinates
    /// `(x, y) ∈ [-0.5, 0.5]²`.
    pub fn covers(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let u = x * c + y * s;
        let v = -x * s + y * c;
        let f = self.frequency;
        match self.pattern_kind {
            PatternKind::Stripes => (f * u).rem_euclid(1.0) < self.density,
            PatternKind::Checks => {
                let a = (f * u).floor() as i64;
                let b = (f * v).floor() as i64;
                (a + b).rem_euclid(2) == 0
            }
            PatternKind::Dots => {
                let du = (f * u).rem_euclid(1.0) - 0.5;
                let dv = (f * v).rem_euclid(1.0) - 0.5;
                du * du + dv * dv < self.density * self.density
            }
            PatternKind::Blobs => self.elements.iter().any(|&[bx, by, r]| {
                let (dx, dy) = (x - bx, y - by);
                dx * dx + dy * dy < r * r
            }),
            PatternKind::GlyphBand => {
                // Axis-aligned band: horizontal for angle < π/2, else vertical.
                let (along, across) = if self.angle < std::f64::consts::FRAC_PI_2 {
                    (x, y)
                } else {
                    (y, x)
                };
                let offset = self.elements[0][0];
                let half = self.density / 2.0;
                let t = (across - offset + half) / self.density;
                if !(0.0..1.0).contains(&t) {
                    return false;
                }
                let glyphs = self.frequency as usize;
                let a = (along + 0.45) / 0.9;
                if !(0.0..1.0).contains(&a) {
                    return false;
                }
                let cells_along = glyphs * (GLYPH_W + 1);
                let col = (a * cells_along as f64) as usize;
                let (glyph, gx) = (col / (GLYPH_W + 1), col % (GLYPH_W + 1));
                if gx == GLYPH_W {
                    return false;
                }
                let gy = ((t * GLYPH_H as f64) as usize).min(GLYPH_H - 1);
                self.glyph_bits[(glyph * GLYPH_H + gy) * GLYPH_W + gx]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        for id in 0..10 {
            assert_eq!(StyleSpec::generate(id, 42, id % 2 == 0), StyleSpec::generate(id, 42, id % 2 == 0));
        }
        assert_ne!(StyleSpec::generate(0, 42, false), StyleSpec::generate(0, 43, false));
    }

    #[test]
    fn every_kind_has_coverage() {
        for id in 0..20 {
            let s = StyleSpec::generate(id, 7, false);
            let n = 64;
            let covered = (0..n * n)
                .filter(|i| {
                    let x = (i % n) as f64 / n as f64 - 0.5;
                    let y = (i / n) as f64 / n as f64 - 0.5;
                    s.covers(x, y)
                })
                .count();
            let frac = covered as f64 / (n * n) as f64;
            assert!(frac > 0.05 && frac < 0.8, "style {id} ({:?}) coverage {frac}", s.pattern_kind);
        }
    }
}
