//! Point and box prompts derived from ground-truth masks.
//!
//! Coordinates are continuous pixel coordinates in the model-input frame:
//! a point prompt sits on a pixel center (`col + 0.5`, `row + 0.5`) and a
//! box spans pixel edges, so the one-pixel box around `(row 7, col 5)` is
//! `(5, 7, 6, 8)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};
use crate::mask::{GlyphMask, MaskScope};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: f64,
    pub y: f64,
    pub polarity: Polarity,
}

impl PointPrompt {
    pub fn positive_at_pixel(row: usize, col: usize) -> Self {
        Self {
            x: col as f64 + 0.5,
            y: row as f64 + 0.5,
            polarity: Polarity::Positive,
        }
    }

    /// The `(row, col)` of the pixel this point sits in.
    pub fn pixel(&self) -> (usize, usize) {
        (libm::floor(self.y) as usize, libm::floor(self.x) as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoxPrompt {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Everything fed to the prompt encoder for one prediction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PromptSet {
    pub points: Vec<PointPrompt>,
    pub bbox: Option<BoxPrompt>,
}

impl PromptSet {
    pub fn from_points(points: Vec<PointPrompt>) -> Self {
        Self { points, bbox: None }
    }

    pub fn from_box(bbox: BoxPrompt) -> Self {
        Self {
            points: Vec::new(),
            bbox: Some(bbox),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.bbox.is_none()
    }

    /// Number of drawn markers (points plus one per box).
    pub fn len(&self) -> usize {
        self.points.len() + usize::from(self.bbox.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptScope {
    ImageLevel,
    PerBlock,
}

impl PromptScope {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptScope::ImageLevel => "image_level",
            PromptScope::PerBlock => "per_block",
        }
    }
}

/// How prompts are drawn for an evaluation or training item.
///
/// Per-block scope exists only for point prompts; box prompts are always
/// image-level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PromptStrategy {
    Points { k: usize, scope: PromptScope },
    Box { scale: f64 },
}

impl PromptStrategy {
    pub fn points(k: usize) -> Self {
        PromptStrategy::Points {
            k,
            scope: PromptScope::ImageLevel,
        }
    }

    pub fn points_per_block(k: usize) -> Self {
        PromptStrategy::Points {
            k,
            scope: PromptScope::PerBlock,
        }
    }

    pub fn bbox(scale: f64) -> Self {
        PromptStrategy::Box { scale }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PromptStrategy::Points { k: 0, .. } => {
                Err(CoreError::InvalidStrategy("point strategies need k >= 1"))
            }
            PromptStrategy::Box { scale } if !(scale > 0.0 && scale <= 2.0) => {
                Err(CoreError::InvalidScale(scale))
            }
            _ => Ok(()),
        }
    }

    pub fn scope(&self) -> PromptScope {
        match *self {
            PromptStrategy::Points { scope, .. } => scope,
            PromptStrategy::Box { .. } => PromptScope::ImageLevel,
        }
    }

    /// `k` for point strategies, the scale for box strategies.
    pub fn k_or_scale(&self) -> String {
        match *self {
            PromptStrategy::Points { k, .. } => k.to_string(),
            PromptStrategy::Box { scale } => format!("{scale}"),
        }
    }

    /// Row label in the results tables, e.g. `2 random point`,
    /// `0.5 Bbox` or `3 random points/block`.
    pub fn table_label(&self) -> String {
        match *self {
            PromptStrategy::Points {
                k,
                scope: PromptScope::ImageLevel,
            } => format!("{k} random point"),
            PromptStrategy::Points {
                k,
                scope: PromptScope::PerBlock,
            } => {
                if k == 1 {
                    "1 random point/block".to_string()
                } else {
                    format!("{k} random points/block")
                }
            }
            PromptStrategy::Box { scale } => format!("{scale} Bbox"),
        }
    }

    /// Sort key giving the results-table row order: image-level points by
    /// `k`, then boxes by scale, then per-block points by `k`.
    pub fn order_key(&self) -> (u8, f64) {
        match *self {
            PromptStrategy::Points {
                k,
                scope: PromptScope::ImageLevel,
            } => (0, k as f64),
            PromptStrategy::Box { scale } => (1, scale),
            PromptStrategy::Points {
                k,
                scope: PromptScope::PerBlock,
            } => (2, k as f64),
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PromptStrategy::Points {
                k,
                scope: PromptScope::ImageLevel,
            } => write!(f, "points:{k}"),
            PromptStrategy::Points {
                k,
                scope: PromptScope::PerBlock,
            } => write!(f, "points:{k}:per_block"),
            PromptStrategy::Box { scale } => write!(f, "box:{scale}"),
        }
    }
}

impl FromStr for PromptStrategy {
    type Err = CoreError;

    /// Parses `points:K`, `points:K:image_level`, `points:K:per_block` or
    /// `box:SCALE`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let strategy = match parts.as_slice() {
            ["points", k] | ["points", k, "image_level"] => PromptStrategy::points(parse_k(k)?),
            ["points", k, "per_block"] => PromptStrategy::points_per_block(parse_k(k)?),
            ["box", scale] => PromptStrategy::bbox(
                scale
                    .parse::<f64>()
                    .map_err(|_| CoreError::InvalidStrategy("box scale is not a number"))?,
            ),
            _ => return Err(CoreError::InvalidStrategy("unrecognised strategy syntax")),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

fn parse_k(k: &str) -> Result<usize> {
    k.parse::<usize>()
        .map_err(|_| CoreError::InvalidStrategy("point count is not an integer"))
}

impl Serialize for PromptStrategy {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptStrategy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Draws `k` positive points uniformly from the foreground of `mask`,
/// without replacement unless the foreground has fewer than `k` pixels.
pub fn sample_point_prompts(mask: &GlyphMask, k: usize, item_seed: u64) -> Result<Vec<PointPrompt>> {
    if k == 0 {
        return Err(CoreError::InvalidStrategy("point strategies need k >= 1"));
    }
    let fg = mask.foreground();
    if fg.is_empty() {
        return Err(CoreError::EmptyForeground);
    }
    let mut rng = seed::rng(item_seed);
    let picks: Vec<usize> = if fg.len() >= k {
        index::sample(&mut rng, fg.len(), k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..fg.len())).collect()
    };
    Ok(picks
        .into_iter()
        .map(|i| {
            let (r, c) = fg[i];
            PointPrompt::positive_at_pixel(r, c)
        })
        .collect())
}

/// Tight foreground box scaled by `scale` about its center, clipped to the
/// mask frame and kept at least one pixel wide and tall.
pub fn derive_box_prompt(mask: &GlyphMask, scale: f64) -> Result<BoxPrompt> {
    if !(scale > 0.0 && scale <= 2.0) {
        return Err(CoreError::InvalidScale(scale));
    }
    let (r0, c0, r1, c1) = mask.bounds().ok_or(CoreError::EmptyForeground)?;
    let (x_min, x_max) = scale_span(c0 as f64, (c1 + 1) as f64, scale, mask.width() as f64);
    let (y_min, y_max) = scale_span(r0 as f64, (r1 + 1) as f64, scale, mask.height() as f64);
    Ok(BoxPrompt {
        x_min,
        y_min,
        x_max,
        y_max,
    })
}

fn scale_span(lo: f64, hi: f64, scale: f64, limit: f64) -> (f64, f64) {
    let center = (lo + hi) / 2.0;
    let half = (hi - lo) * scale / 2.0;
    let mut a = (center - half).max(0.0);
    let mut b = (center + half).min(limit);
    if b - a < 1.0 {
        let c = ((a + b) / 2.0).clamp(0.5, limit - 0.5);
        a = c - 0.5;
        b = c + 0.5;
    }
    (a, b)
}

/// One prediction target together with the prompts that select it.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPrompts<'a> {
    pub target: &'a GlyphMask,
    /// Block label for per-block targets; `None` for image-level targets.
    pub block_label: Option<String>,
    pub item_seed: u64,
    pub prompts: PromptSet,
}

fn block_label(mask: &GlyphMask, index: usize) -> String {
    match mask.scope() {
        MaskScope::Block(label) => label.clone(),
        MaskScope::ImageLevel => format!("#{index}"),
    }
}

/// Expands a strategy into prompt sets for one image.
///
/// Image-level scope yields one target (the image mask); per-block scope
/// yields one target per block mask. Each item seed hashes
/// `(base_seed + run_index, image_id, block label, run_index)`. An image with a
/// single block hashes the empty label, because its only block coincides with
/// the image-level target, so both scopes draw the same points there.
pub fn prompts_for_strategy<'a>(
    image_id: &str,
    image_mask: &'a GlyphMask,
    blocks: &'a [GlyphMask],
    strategy: &PromptStrategy,
    base_seed: u64,
    run_index: u64,
) -> Result<Vec<TargetPrompts<'a>>> {
    strategy.validate()?;
    let run_seed = base_seed.wrapping_add(run_index);
    match *strategy {
        PromptStrategy::Points {
            k,
            scope: PromptScope::ImageLevel,
        } => {
            let s = seed::item_seed(run_seed, image_id, "", run_index);
            Ok(alloc::vec![TargetPrompts {
                target: image_mask,
                block_label: None,
                item_seed: s,
                prompts: PromptSet::from_points(sample_point_prompts(image_mask, k, s)?),
            }])
        }
        PromptStrategy::Box { scale } => {
            let s = seed::item_seed(run_seed, image_id, "", run_index);
            Ok(alloc::vec![TargetPrompts {
                target: image_mask,
                block_label: None,
                item_seed: s,
                prompts: PromptSet::from_box(derive_box_prompt(image_mask, scale)?),
            }])
        }
        PromptStrategy::Points {
            k,
            scope: PromptScope::PerBlock,
        } => {
            if blocks.is_empty() {
                return Err(CoreError::NoPolygons);
            }
            let single = blocks.len() == 1;
            blocks
                .iter()
                .enumerate()
                .map(|(i, block)| {
                    block.check_shape(image_mask)?;
                    let label = block_label(block, i);
                    let key = if single { "" } else { label.as_str() };
                    let s = seed::item_seed(run_seed, image_id, key, run_index);
                    Ok(TargetPrompts {
                        target: block,
                        block_label: Some(label),
                        item_seed: s,
                        prompts: PromptSet::from_points(sample_point_prompts(block, k, s)?),
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_tight_box() {
        let mut m = GlyphMask::empty(16, 16, MaskScope::ImageLevel);
        m.set(7, 5, true);
        let b = derive_box_prompt(&m, 1.0).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (5.0, 7.0, 6.0, 8.0));
    }

    #[test]
    fn half_scale_full_mask() {
        let m = GlyphMask::full(256, 256, MaskScope::ImageLevel);
        let b = derive_box_prompt(&m, 0.5).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (64.0, 64.0, 192.0, 192.0));
    }

    #[test]
    fn tiny_box_keeps_unit_size() {
        let mut m = GlyphMask::empty(8, 8, MaskScope::ImageLevel);
        m.set(0, 0, true);
        let b = derive_box_prompt(&m, 0.1).unwrap();
        assert!(b.width() >= 1.0 - 1e-12 && b.height() >= 1.0 - 1e-12);
        assert!(b.x_min >= 0.0 && b.y_min >= 0.0);
    }

    #[test]
    fn box_errors() {
        let empty = GlyphMask::empty(4, 4, MaskScope::ImageLevel);
        assert_eq!(derive_box_prompt(&empty, 1.0), Err(CoreError::EmptyForeground));
        let full = GlyphMask::full(4, 4, MaskScope::ImageLevel);
        assert_eq!(derive_box_prompt(&full, 0.0), Err(CoreError::InvalidScale(0.0)));
        assert_eq!(derive_box_prompt(&full, 2.5), Err(CoreError::InvalidScale(2.5)));
    }

    #[test]
    fn single_point_on_full_mask() {
        let m = GlyphMask::full(4, 4, MaskScope::ImageLevel);
        let pts = sample_point_prompts(&m, 1, 3).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].x >= 0.0 && pts[0].x < 4.0 && pts[0].y >= 0.0 && pts[0].y < 4.0);
    }

    #[test]
    fn empty_mask_has_no_points() {
        let m = GlyphMask::empty(4, 4, MaskScope::ImageLevel);
        assert_eq!(sample_point_prompts(&m, 1, 0), Err(CoreError::EmptyForeground));
    }

    #[test]
    fn without_replacement_when_possible() {
        let mut m = GlyphMask::empty(4, 4, MaskScope::ImageLevel);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(2, 2, true);
        for s in 0..50 {
            let pts = sample_point_prompts(&m, 3, s).unwrap();
            let mut px: Vec<_> = pts.iter().map(|p| p.pixel()).collect();
            px.sort();
            px.dedup();
            assert_eq!(px.len(), 3);
        }
        // Fewer pixels than k falls back to drawing with replacement.
        let pts = sample_point_prompts(&m, 5, 1).unwrap();
        assert_eq!(pts.len(), 5);
    }

    #[test]
    fn strategy_syntax_round_trips() {
        for s in ["points:1", "points:2", "box:0.5", "box:0.75", "points:3:per_block"] {
            let parsed: PromptStrategy = s.parse().unwrap();
            assert_eq!(parsed.to_string(), s);
        }
        assert_eq!(
            "points:2:image_level".parse::<PromptStrategy>().unwrap(),
            PromptStrategy::points(2)
        );
        assert!("points:0".parse::<PromptStrategy>().is_err());
        assert!("box:3".parse::<PromptStrategy>().is_err());
        assert!("box:0.5:per_block".parse::<PromptStrategy>().is_err());
    }

    #[test]
    fn table_labels() {
        assert_eq!(PromptStrategy::points(2).table_label(), "2 random point");
        assert_eq!(PromptStrategy::bbox(0.75).table_label(), "0.75 Bbox");
        assert_eq!(PromptStrategy::points_per_block(1).table_label(), "1 random point/block");
        assert_eq!(PromptStrategy::points_per_block(3).table_label(), "3 random points/block");
    }

    #[test]
    fn single_block_matches_image_level() {
        let mut block = GlyphMask::empty(8, 8, MaskScope::Block("b".into()));
        for r in 2..6 {
            for c in 1..7 {
                block.set(r, c, true);
            }
        }
        let image = block.clone().with_scope(MaskScope::ImageLevel);
        let blocks = [block];
        let a = prompts_for_strategy("x", &image, &blocks, &PromptStrategy::points(2), 5, 1).unwrap();
        let b = prompts_for_strategy("x", &image, &blocks, &PromptStrategy::points_per_block(2), 5, 1)
            .unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
        assert_eq!(a[0].prompts, b[0].prompts);
    }
}
