//! In-memory samples at model-input resolution.

use glyphseg_core::{GlyphMask, MaskScope, Split};
use image::RgbImage;

use super::imaging::{load_mask_png, load_rgb, resize_pair, to_chw};
use super::manifest::{DatasetManifest, ManifestRecord};
use crate::error::Result;

/// One image resized to `size x size` with its masks.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image_id: String,
    pub size: usize,
    pub image: RgbImage,
    /// `[3, size, size]` channel-major values in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub mask: GlyphMask,
    /// One mask per glyph block, same size as `mask`.
    pub blocks: Vec<GlyphMask>,
}

impl Sample {
    /// Builds a sample directly from in-memory parts of matching size.
    pub fn from_parts(
        image_id: impl Into<String>,
        image: RgbImage,
        mask: GlyphMask,
        blocks: Vec<GlyphMask>,
    ) -> Self {
        let size = image.width() as usize;
        let pixels = to_chw(&image);
        Self {
            image_id: image_id.into(),
            size,
            image,
            pixels,
            mask,
            blocks,
        }
    }
}

pub fn load_sample(manifest: &DatasetManifest, record: &ManifestRecord, size: usize) -> Result<Sample> {
    let image = load_rgb(&manifest.resolve(&record.image_path))?;
    let mask = load_mask_png(&manifest.resolve(&record.mask_path), MaskScope::ImageLevel)?;
    let (image, mask) = resize_pair(&image, &mask, size)?;
    let doc = record.to_document()?;
    let blocks = doc
        .block_masks()?
        .into_iter()
        .map(|m| m.resize_nearest(size, size))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Sample::from_parts(record.image_id.clone(), image, mask, blocks))
}

pub fn load_split(manifest: &DatasetManifest, split: Split, size: usize) -> Result<Vec<Sample>> {
    manifest
        .records_in(split)
        .into_iter()
        .map(|r| load_sample(manifest, r, size))
        .collect()
}
