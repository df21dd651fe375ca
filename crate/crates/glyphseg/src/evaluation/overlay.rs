//! Three-pane qualitative panels: input with prompt markers, ground truth,
//! prediction.

use std::path::Path;

use glyphseg_core::{GlyphMask, Polarity, PromptSet, PromptStrategy};
use image::{Rgb, RgbImage};

use crate::corpus::imaging::save_png;
use crate::error::{Error, Result};

pub const GUTTER: u32 = 4;
pub const GUTTER_COLOR: Rgb<u8> = Rgb([128, 128, 128]);
pub const POSITIVE_MARKER: Rgb<u8> = Rgb([255, 0, 0]);
pub const NEGATIVE_MARKER: Rgb<u8> = Rgb([0, 0, 255]);
pub const BOX_MARKER: Rgb<u8> = Rgb([0, 255, 0]);
const FOREGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const BACKGROUND: Rgb<u8> = Rgb([0, 0, 0]);

/// `{image_id}_{model}_{strategy}_{run}.png` with `:` in the strategy
/// replaced by `-`.
pub fn overlay_file_name(image_id: &str, model: &str, strategy: Option<&PromptStrategy>, run: u64) -> String {
    let s = strategy.map_or_else(|| "none".to_string(), |s| s.to_string().replace(':', "-"));
    format!("{image_id}_{model}_{s}_{run}.png")
}

fn marker_radius(size: u32) -> i64 {
    i64::from((size / 64).max(2))
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_point(img: &mut RgbImage, x: f64, y: f64, color: Rgb<u8>) {
    let r = marker_radius(img.width());
    let (cx, cy) = (x.floor() as i64, y.floor() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(img, cx + dx, cy + dy, color);
            }
        }
    }
}

fn draw_box(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64) {
    let (x0, y0) = (x0.floor() as i64, y0.floor() as i64);
    let (x1, y1) = ((x1.ceil() as i64 - 1).max(x0), (y1.ceil() as i64 - 1).max(y0));
    for x in x0..=x1 {
        put(img, x, y0, BOX_MARKER);
        put(img, x, y1, BOX_MARKER);
    }
    for y in y0..=y1 {
        put(img, x0, y, BOX_MARKER);
        put(img, x1, y, BOX_MARKER);
    }
}

fn mask_pane(mask: &GlyphMask) -> RgbImage {
    RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        if mask.get(y as usize, x as usize) {
            FOREGROUND
        } else {
            BACKGROUND
        }
    })
}

/// Renders the panel. Every point gets one disc marker and every box one
/// outline on the input pane.
pub fn render_overlay(image: &RgbImage, gt: &GlyphMask, pred: &GlyphMask, prompts: &[PromptSet]) -> Result<RgbImage> {
    let (w, h) = image.dimensions();
    if gt.shape() != (h as usize, w as usize) || pred.shape() != gt.shape() {
        return Err(Error::Core(glyphseg_core::CoreError::ShapeMismatch {
            left: gt.shape(),
            right: pred.shape(),
        }));
    }
    let mut input = image.clone();
    for set in prompts {
        if let Some(b) = set.bbox {
            draw_box(&mut input, b.x_min, b.y_min, b.x_max, b.y_max);
        }
        for p in &set.points {
            let color = match p.polarity {
                Polarity::Positive => POSITIVE_MARKER,
                Polarity::Negative => NEGATIVE_MARKER,
            };
            draw_point(&mut input, p.x, p.y, color);
        }
    }
    let mut panel = RgbImage::from_pixel(3 * w + 2 * GUTTER, h, GUTTER_COLOR);
    for (i, pane) in [input, mask_pane(gt), mask_pane(pred)].iter().enumerate() {
        image::imageops::replace(&mut panel, pane, i64::from(i as u32 * (w + GUTTER)), 0);
    }
    Ok(panel)
}

pub fn save_overlay(
    out_dir: &Path,
    file_name: &str,
    image: &RgbImage,
    gt: &GlyphMask,
    pred: &GlyphMask,
    prompts: &[PromptSet],
) -> Result<std::path::PathBuf> {
    let path = out_dir.join(file_name);
    save_png(&render_overlay(image, gt, pred, prompts)?, &path)?;
    Ok(path)
}
