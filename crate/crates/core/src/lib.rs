//! Allocation-only building blocks for glyph block segmentation.
//!
//! Everything here is pure and deterministic: polygon rasterization into
//! binary masks, nearest-neighbour mask resampling, seeded dataset splits,
//! prompt sampling from ground-truth masks and overlap metrics. Nothing in
//! this crate touches the filesystem, so it builds without `std`.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod annotation;
pub mod error;
pub mod geometry;
pub mod mask;
pub mod metrics;
pub mod prompts;
pub mod seed;
pub mod split;

pub use annotation::{AnnotationDocument, PolygonAnnotation};
pub use error::{CoreError, Result};
pub use geometry::{rasterize_polygon, Vertex};
pub use mask::{GlyphMask, MaskScope};
pub use metrics::{dice_score, iou, MetricPair, MetricSummary};
pub use prompts::{
    derive_box_prompt, prompts_for_strategy, sample_point_prompts, BoxPrompt, PointPrompt,
    Polarity, PromptScope, PromptSet, PromptStrategy, TargetPrompts,
};
pub use split::{split_dataset, Split, SplitAssignment};
