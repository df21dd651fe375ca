//! Synthetic stand-in corpus: dark glyph-like blocks with internal strokes
//! arranged in rough grid columns over a textured background, plus
//! distractor clutter outside the blocks.
//!
//! Each image is written as a PNG with a LabelMe annotation next to it, and
//! the annotation directory is then run through the regular ingest path, so
//! masks and the manifest come from exactly the code that handles real data.

use std::f64::consts::TAU;
use std::path::Path;

use glyphseg_core::{seed, AnnotationDocument, GlyphMask, MaskScope, PolygonAnnotation, Vertex};
use image::{Rgb, RgbImage};
use log::info;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::imaging::{ensure_parent, save_png};
use crate::corpus::labelme::serialize_annotation_document;
use crate::corpus::{ingest_directory, DatasetManifest};
use crate::error::{Error, Result};

/// Attempts per block before generation gives up.
pub const RETRY_BUDGET: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    TexturedNoise,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_images: usize,
    pub image_size: usize,
    /// Inclusive range.
    pub blocks_per_image: (usize, usize),
    /// Inclusive range.
    pub block_vertex_count: (usize, usize),
    pub background: Background,
    pub clutter_shapes: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 117,
            image_size: 256,
            blocks_per_image: (2, 8),
            block_vertex_count: (6, 14),
            background: Background::TexturedNoise,
            clutter_shapes: 6,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (b0, b1) = self.blocks_per_image;
        let (v0, v1) = self.block_vertex_count;
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_images == 0 {
            return bad("n_images must be positive");
        }
        if self.image_size < 32 {
            return bad("image_size must be at least 32");
        }
        if b0 == 0 || b0 > b1 {
            return bad("blocks_per_image must be a non-empty positive range");
        }
        if v0 < 3 || v0 > v1 {
            return bad("block_vertex_count must be a range starting at 3 or more");
        }
        Ok(())
    }
}

/// One generated image with its annotation and the per-block pixels that
/// were painted as glyph foreground.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub image: RgbImage,
    pub document: AnnotationDocument,
    pub painted: Vec<GlyphMask>,
}

pub fn image_id(index: usize) -> String {
    format!("synth_{index:04}")
}

#[derive(Debug, Clone)]
struct Blob {
    cx: f64,
    cy: f64,
    /// Radius of a circle containing the whole blob.
    reach: f64,
    ring: Vec<Vertex>,
}

fn inside(ring: &[Vertex], x: f64, y: f64) -> bool {
    let mut c = false;
    let mut j = ring.len() - 1;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x {
            c = !c;
        }
        j = i;
    }
    c
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn make_blob(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64, vertices: usize) -> Blob {
    let phase = rng.random_range(0.0..TAU);
    let step = TAU / vertices as f64;
    let ring: Vec<Vertex> = (0..vertices)
        .map(|i| {
            let a = phase + step * (i as f64 + rng.random_range(-0.25..0.25));
            let r = radius * rng.random_range(0.85..1.15);
            Vertex {
                x: round2(cx + r * a.cos()),
                y: round2(cy + r * a.sin()),
            }
        })
        .collect();
    let reach = ring
        .iter()
        .map(|v| ((v.x - cx).powi(2) + (v.y - cy).powi(2)).sqrt())
        .fold(0.0, f64::max);
    Blob { cx, cy, reach, ring }
}

fn overlaps(blobs: &[Blob], cx: f64, cy: f64, reach: f64, margin: f64) -> bool {
    blobs
        .iter()
        .any(|b| ((b.cx - cx).powi(2) + (b.cy - cy).powi(2)).sqrt() < b.reach + reach + margin)
}

fn background(rng: &mut ChaCha8Rng, size: u32, kind: Background) -> RgbImage {
    let base = [206.0, 190.0, 156.0];
    if kind == Background::Flat {
        return RgbImage::from_pixel(size, size, Rgb(base.map(|c| c as u8)));
    }
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..4.0) * TAU / size as f64,
                rng.random_range(0.5..4.0) * TAU / size as f64,
                rng.random_range(0.0..TAU),
                rng.random_range(4.0..10.0),
            )
        })
        .collect();
    let mut img = RgbImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let low: f64 = waves
                .iter()
                .map(|(fx, fy, p, a)| a * (fx * x as f64 + fy * y as f64 + p).sin())
                .sum();
            let grain = rng.random_range(-12.0..12.0);
            let px = base.map(|c| (c + low + grain).clamp(0.0, 255.0) as u8);
            img.put_pixel(x, y, Rgb(px));
        }
    }
    img
}

fn stroke(img: &mut RgbImage, from: (f64, f64), to: (f64, f64), width: f64, color: [f64; 3], clip: Option<&[Vertex]>) {
    let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt().max(1.0);
    let steps = (len * 2.0) as usize + 1;
    let r = width / 2.0;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let (x, y) = (from.0 + (to.0 - from.0) * t, from.1 + (to.1 - from.1) * t);
        let (x0, x1) = ((x - r).floor() as i64, (x + r).ceil() as i64);
        let (y0, y1) = ((y - r).floor() as i64, (y + r).ceil() as i64);
        for py in y0..=y1 {
            for px in x0..=x1 {
                if px < 0 || py < 0 || px as u32 >= img.width() || py as u32 >= img.height() {
                    continue;
                }
                let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
                if (fx - x).powi(2) + (fy - y).powi(2) > r * r {
                    continue;
                }
                if clip.is_some_and(|ring| !inside(ring, fx, fy)) {
                    continue;
                }
                img.put_pixel(px as u32, py as u32, Rgb(color.map(|c| c as u8)));
            }
        }
    }
}

/// Generates image `index` of the corpus described by `config`.
pub fn render_synthetic_image(config: &SynthConfig, index: usize) -> Result<SynthImage> {
    config.validate()?;
    let id = image_id(index);
    let mut rng = seed::rng(seed::item_seed(config.seed, &id, "synth", 0));
    let size = config.image_size;
    let sz = size as f64;
    let mut img = background(&mut rng, size as u32, config.background);

    let n_blocks = rng.random_range(config.blocks_per_image.0..=config.blocks_per_image.1);
    let cols = ((n_blocks as f64).sqrt().ceil() as usize).max(2);
    let rows = n_blocks.div_ceil(cols);
    let (cell_w, cell_h) = (sz / cols as f64, sz / rows as f64);
    let mut cells: Vec<usize> = (0..cols * rows).collect();
    // Column-major cell order keeps blocks in vertical columns.
    cells.sort_by_key(|&c| (c % cols, c / cols));

    let mut blobs: Vec<Blob> = Vec::with_capacity(n_blocks);
    for &cell in cells.iter().take(n_blocks) {
        let (col, row) = ((cell % cols) as f64, (cell / cols) as f64);
        let cell_min = cell_w.min(cell_h);
        let vertices = rng.random_range(config.block_vertex_count.0..=config.block_vertex_count.1);
        let mut placed = None;
        for _ in 0..RETRY_BUDGET {
            let cx = (col + 0.5 + rng.random_range(-0.08..0.08)) * cell_w;
            let cy = (row + 0.5 + rng.random_range(-0.08..0.08)) * cell_h;
            let radius = cell_min * rng.random_range(0.26..0.34);
            let blob = make_blob(&mut rng, cx, cy, radius, vertices);
            let in_frame = blob
                .ring
                .iter()
                .all(|v| v.x >= 0.0 && v.y >= 0.0 && v.x <= sz && v.y <= sz);
            if in_frame && !overlaps(&blobs, blob.cx, blob.cy, blob.reach, 2.0) {
                placed = Some(blob);
                break;
            }
        }
        blobs.push(placed.ok_or_else(|| {
            Error::GenerationFailure(format!("{id}: no non-overlapping placement after {RETRY_BUDGET} tries"))
        })?);
    }

    let mut painted = Vec::with_capacity(blobs.len());
    for (b, blob) in blobs.iter().enumerate() {
        let label = format!("block_{b}");
        let mut mask = GlyphMask::empty(size, size, MaskScope::Block(label));
        let ink = [rng.random_range(40.0..70.0), rng.random_range(30.0..55.0), rng.random_range(25.0..45.0)];
        let r0 = (blob.cy - blob.reach).floor().max(0.0) as usize;
        let r1 = ((blob.cy + blob.reach).ceil() as usize).min(size);
        let c0 = (blob.cx - blob.reach).floor().max(0.0) as usize;
        let c1 = ((blob.cx + blob.reach).ceil() as usize).min(size);
        for r in r0..r1 {
            for c in c0..c1 {
                if inside(&blob.ring, c as f64 + 0.5, r as f64 + 0.5) {
                    mask.set(r, c, true);
                    let shade = rng.random_range(-8.0..8.0);
                    img.put_pixel(c as u32, r as u32, Rgb(ink.map(|v| (v + shade) as u8)));
                }
            }
        }
        let detail = [ink[0] + 70.0, ink[1] + 65.0, ink[2] + 55.0];
        for _ in 0..rng.random_range(2..=4) {
            let p = |rng: &mut ChaCha8Rng| {
                let a = rng.random_range(0.0..TAU);
                let d = blob.reach * rng.random_range(0.0..0.6);
                (blob.cx + d * a.cos(), blob.cy + d * a.sin())
            };
            let (from, to) = (p(&mut rng), p(&mut rng));
            let width = rng.random_range(1.0..2.5) * sz / 256.0;
            stroke(&mut img, from, to, width.max(1.0), detail, Some(&blob.ring));
        }
        painted.push(mask);
    }

    let clutter_ink = [96.0, 82.0, 66.0];
    for _ in 0..config.clutter_shapes {
        for _ in 0..RETRY_BUDGET {
            let len = rng.random_range(0.02..0.06) * sz;
            let (x, y) = (rng.random_range(0.0..sz), rng.random_range(0.0..sz));
            if overlaps(&blobs, x, y, len, 3.0) {
                continue;
            }
            let a = rng.random_range(0.0..TAU);
            let to = (x + len * a.cos(), y + len * a.sin());
            let width = (rng.random_range(1.0..3.0) * sz / 256.0).max(1.0);
            stroke(&mut img, (x, y), to, width, clutter_ink, None);
            break;
        }
    }

    let shapes = blobs
        .iter()
        .enumerate()
        .map(|(b, blob)| PolygonAnnotation::new(format!("block_{b}"), blob.ring.clone(), size, size))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let document = AnnotationDocument {
        image_id: id.clone(),
        image_path: format!("../images/{id}.png"),
        image_width: size,
        image_height: size,
        shapes,
    };
    Ok(SynthImage {
        image: img,
        document,
        painted,
    })
}

/// Writes `images/`, `annotations/`, `masks/` and the manifest under
/// `out_dir`, with splits drawn from `config.seed`.
pub fn generate_synthetic_corpus(config: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let ann_dir = out_dir.join("annotations");
    for i in 0..config.n_images {
        let s = render_synthetic_image(config, i)?;
        let id = &s.document.image_id;
        save_png(&s.image, &out_dir.join("images").join(format!("{id}.png")))?;
        let ann = ann_dir.join(format!("{id}.json"));
        ensure_parent(&ann)?;
        std::fs::write(&ann, serialize_annotation_document(&s.document)?).map_err(|e| Error::io(&ann, e))?;
    }
    let report = ingest_directory(&ann_dir, out_dir, config.seed)?;
    info!("synthetic corpus of {} images at {}", report.images, out_dir.display());
    DatasetManifest::read(&report.manifest_path)
}
