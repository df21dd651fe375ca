//! Image and mask files, and the fixed-size resize applied before training.

use std::path::Path;

use glyphseg_core::{CoreError, GlyphMask, MaskScope};
use image::imageops::FilterType;
use image::{GrayImage, Luma, RgbImage};

use crate::error::{Error, Result};

/// Default model-input side length.
pub const DEFAULT_INPUT_SIZE: usize = 256;

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })?;
    Ok(img.to_rgb8())
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Writes a single-channel PNG with foreground 255 and background 0.
pub fn save_mask_png(mask: &GlyphMask, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let img = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a mask PNG; values of 128 and above are foreground.
pub fn load_mask_png(path: &Path, scope: MaskScope) -> Result<GlyphMask> {
    let img = image::open(path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let values: Vec<u8> = img.pixels().map(|p| u8::from(p.0[0] >= 128)).collect();
    Ok(GlyphMask::from_values(h as usize, w as usize, &values, scope)?)
}

/// Resizes an image/mask pair to `target x target` without preserving the
/// aspect ratio: bilinear (triangle filter) for the image and
/// nearest-neighbour for the mask, which therefore stays binary.
pub fn resize_pair(image: &RgbImage, mask: &GlyphMask, target: usize) -> Result<(RgbImage, GlyphMask)> {
    if target == 0 || image.width() == 0 || image.height() == 0 || mask.is_empty_shape() {
        return Err(Error::Core(CoreError::EmptyInput));
    }
    let t = target as u32;
    let resized = if image.dimensions() == (t, t) {
        image.clone()
    } else {
        image::imageops::resize(image, t, t, FilterType::Triangle)
    };
    Ok((resized, mask.resize_nearest(target, target)?))
}

/// Channel-major `[3, H, W]` floats in `[0, 1]`.
pub fn to_chw(image: &RgbImage) -> Vec<f32> {
    let (w, h) = image.dimensions();
    let plane = (w * h) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (i, p) in image.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = p.0[c] as f32 / 255.0;
        }
    }
    out
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

trait ShapeExt {
    fn is_empty_shape(&self) -> bool;
}

impl ShapeExt for GlyphMask {
    fn is_empty_shape(&self) -> bool {
        self.height() == 0 || self.width() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_pair_is_unchanged() {
        let img = RgbImage::from_fn(8, 8, |x, y| image::Rgb([x as u8 * 30, y as u8 * 30, 7]));
        let mut mask = GlyphMask::empty(8, 8, MaskScope::ImageLevel);
        mask.set(3, 4, true);
        let (i2, m2) = resize_pair(&img, &mask, 8).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn zero_target_is_rejected() {
        let img = RgbImage::new(4, 4);
        let mask = GlyphMask::empty(4, 4, MaskScope::ImageLevel);
        assert!(resize_pair(&img, &mask, 0).is_err());
    }

    #[test]
    fn non_square_input_is_squashed() {
        let img = RgbImage::new(70, 30);
        let mask = GlyphMask::full(30, 70, MaskScope::ImageLevel);
        let (i2, m2) = resize_pair(&img, &mask, 16).unwrap();
        assert_eq!(i2.dimensions(), (16, 16));
        assert_eq!(m2.shape(), (16, 16));
        assert_eq!(m2.count(), 256);
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mut mask = GlyphMask::empty(5, 7, MaskScope::ImageLevel);
        mask.set(0, 6, true);
        mask.set(4, 0, true);
        save_mask_png(&mask, &path).unwrap();
        let raw = image::open(&path).unwrap().to_luma8();
        assert_eq!(raw.get_pixel(6, 0).0[0], 255);
        assert_eq!(raw.get_pixel(1, 1).0[0], 0);
        assert_eq!(load_mask_png(&path, MaskScope::ImageLevel).unwrap(), mask);
    }
}
