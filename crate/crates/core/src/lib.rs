//! Color-variant grouping: part-based contrastive image embeddings,
//! Ward agglomerative clustering, and grouping quality metrics, together
//! with a procedural corpus whose ground truth is known by construction.
// `!(x > 0.0)` is used on purpose so NaN falls into the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numeric;
pub mod rng;

pub use error::{Error, Result};
pub mod color;
pub mod synth;
pub mod augment;
pub mod encoder;
pub mod objectives;
pub mod trainer;
mod binio;
pub mod embedding;
pub mod clustering;
pub mod metrics;
