//! Polygon annotations of glyph blocks and their conversion to masks.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{self, Vertex};
use crate::mask::{GlyphMask, MaskScope};

/// One glyph block outline in original-image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonAnnotation {
    pub label: String,
    pub points: Vec<Vertex>,
    /// Set when at least one vertex was clamped into the image frame.
    #[serde(default)]
    pub clamped: bool,
}

impl PolygonAnnotation {
    /// Validates the ring and clamps it into `[0, width] x [0, height]`.
    pub fn new(
        label: impl Into<String>,
        mut points: Vec<Vertex>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if points.len() < 3 {
            return Err(CoreError::DegeneratePolygon("fewer than 3 vertices"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteVertex);
        }
        let mut clamped = false;
        for v in &mut points {
            clamped |= v.clamp_to(width as f64, height as f64);
        }
        if libm::fabs(geometry::signed_area(&points)) < 1e-12 {
            return Err(CoreError::DegeneratePolygon("zero area after clamping"));
        }
        Ok(Self {
            label: label.into(),
            points,
            clamped,
        })
    }

    pub fn area(&self) -> f64 {
        libm::fabs(geometry::signed_area(&self.points))
    }

    /// Rasterizes onto a `height x width` grid with block scope.
    pub fn rasterize(&self, height: usize, width: usize) -> Result<GlyphMask> {
        geometry::rasterize_polygon(
            &self.points,
            height,
            width,
            MaskScope::Block(self.label.clone()),
        )
    }
}

/// All polygon annotations for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub image_id: String,
    pub image_path: String,
    pub image_width: usize,
    pub image_height: usize,
    pub shapes: Vec<PolygonAnnotation>,
}

impl AnnotationDocument {
    /// Per-block masks at the document's native resolution, in shape order.
    pub fn block_masks(&self) -> Result<Vec<GlyphMask>> {
        self.check()?;
        self.shapes
            .iter()
            .map(|s| s.rasterize(self.image_height, self.image_width))
            .collect()
    }

    /// Image-level ground truth: the pixelwise OR of every block mask.
    pub fn build_image_mask(&self) -> Result<GlyphMask> {
        self.check()?;
        let mut out = GlyphMask::empty(self.image_height, self.image_width, MaskScope::ImageLevel);
        for shape in &self.shapes {
            out.union_with(&shape.rasterize(self.image_height, self.image_width)?)?;
        }
        Ok(out)
    }

    fn check(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(CoreError::InvalidSize {
                width: self.image_width,
                height: self.image_height,
            });
        }
        if self.shapes.is_empty() {
            return Err(CoreError::NoPolygons);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn square(label: &str, x0: f64, y0: f64) -> PolygonAnnotation {
        let pts = vec![
            Vertex::new(x0, y0),
            Vertex::new(x0 + 4.0, y0),
            Vertex::new(x0 + 4.0, y0 + 4.0),
            Vertex::new(x0, y0 + 4.0),
        ];
        PolygonAnnotation::new(label, pts, 16, 16).unwrap()
    }

    fn doc(shapes: Vec<PolygonAnnotation>) -> AnnotationDocument {
        AnnotationDocument {
            image_id: "img".to_string(),
            image_path: "img.png".to_string(),
            image_width: 16,
            image_height: 16,
            shapes,
        }
    }

    #[test]
    fn disjoint_squares_union() {
        let d = doc(vec![square("a", 0.0, 0.0), square("b", 8.0, 8.0)]);
        assert_eq!(d.build_image_mask().unwrap().count(), 32);
    }

    #[test]
    fn identical_polygons_are_idempotent() {
        let one = doc(vec![square("a", 2.0, 2.0)]).build_image_mask().unwrap();
        let two = doc(vec![square("a", 2.0, 2.0), square("a2", 2.0, 2.0)])
            .build_image_mask()
            .unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn no_shapes_is_rejected() {
        assert_eq!(doc(vec![]).build_image_mask(), Err(CoreError::NoPolygons));
    }

    #[test]
    fn overshoot_is_clamped_and_flagged() {
        let pts = vec![
            Vertex::new(-2.0, 1.0),
            Vertex::new(5.0, 1.0),
            Vertex::new(5.0, 20.0),
        ];
        let p = PolygonAnnotation::new("x", pts, 16, 16).unwrap();
        assert!(p.clamped);
        assert!(p.points.iter().all(|v| v.x >= 0.0 && v.y <= 16.0));
    }
}
