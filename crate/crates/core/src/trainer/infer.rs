use crate::augment::{slice_views, ViewMode};
use crate::embedding::EmbeddingMatrix;
use crate::encoder::{embed_object, Checkpoint};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::synth::Manifest;

/// Embeds clean (undistorted) images with the checkpoint's encoder.
/// `view_mode` defaults to the mode the checkpoint was trained with.
pub fn embed_images(
    checkpoint: &Checkpoint,
    ids: Vec<String>,
    images: &[Tensor<f32>],
    view_mode: Option<ViewMode>,
) -> Result<EmbeddingMatrix> {
    let mode = view_mode.unwrap_or(checkpoint.mode.view_mode());
    checkpoint.mode.check_compatible(mode)?;
    if ids.len() != images.len() {
        return Err(Error::dim("inference_embed", format!("{} ids for {} images", ids.len(), images.len())));
    }
    let size = checkpoint.encoder.input_size;
    let rows = images
        .iter()
        .map(|img| {
            let views = slice_views(img, mode, size)?;
            Ok(embed_object(&checkpoint.encoder, &checkpoint.params, &views, true)?.into_data())
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMatrix::new(ids, rows)
}

pub fn inference_embed(checkpoint: &Checkpoint, manifest: &Manifest, view_mode: Option<ViewMode>) -> Result<EmbeddingMatrix> {
    embed_images(checkpoint, manifest.ids(), &manifest.load_images()?, view_mode)
}
