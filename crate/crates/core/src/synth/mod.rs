//! Procedural "style × color" corpus. Every style is a pattern geometry;
//! every color is a palette entry; images of the same style are color
//! variants of each other by construction.

mod corpus;
mod manifest;
mod render;
mod style;

pub use corpus::{generate_corpus, CorpusConfig};
pub use manifest::{load_image, save_png, Manifest, ManifestRecord, CORPUS_FILE, MANIFEST_FILE};
pub use render::{grayscale, palette, render_sample, render_with, Nuisance, Sample, PALETTE_SIZE};
pub use style::{Locality, PatternKind, StyleSpec};
