//! Polygon geometry and even-odd scanline rasterization.
//!
//! Pixel `(row i, col j)` is foreground iff its center `(j + 0.5, i + 0.5)`
//! lies inside the polygon under the even-odd rule. Centers that sit exactly
//! on an edge are resolved by nudging them by `NUDGE` along each axis toward
//! the polygon centroid before testing, so ownership of boundary pixels does
//! not depend on edge orientation or vertex order.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::mask::{GlyphMask, MaskScope};

/// Boundary tie-break distance, in pixels.
pub const NUDGE: f64 = 1e-9;

/// Polygons whose absolute area falls below this are rejected as degenerate.
const MIN_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Clamps into `[0, width] x [0, height]`, returning whether anything moved.
    pub fn clamp_to(&mut self, width: f64, height: f64) -> bool {
        let x = self.x.clamp(0.0, width);
        let y = self.y.clamp(0.0, height);
        let moved = x != self.x || y != self.y;
        self.x = x;
        self.y = y;
        moved
    }
}

impl From<(f64, f64)> for Vertex {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Signed shoelace area; positive for counter-clockwise rings in y-up axes.
pub fn signed_area(ring: &[Vertex]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Area centroid of the ring, falling back to the vertex mean when the ring
/// has (near) zero signed area.
pub fn centroid(ring: &[Vertex]) -> Vertex {
    let n = ring.len();
    let area = signed_area(ring);
    if n == 0 {
        return Vertex::new(0.0, 0.0);
    }
    if libm::fabs(area) < MIN_AREA {
        let (sx, sy) = ring
            .iter()
            .fold((0.0, 0.0), |(sx, sy), v| (sx + v.x, sy + v.y));
        return Vertex::new(sx / n as f64, sy / n as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let cross = a.x * b.y - b.x * a.y;
        cx += (a.x + b.x) * cross;
        cy += (a.y + b.y) * cross;
    }
    Vertex::new(cx / (6.0 * area), cy / (6.0 * area))
}

fn toward(from: f64, target: f64) -> f64 {
    if target > from {
        from + NUDGE
    } else if target < from {
        from - NUDGE
    } else {
        from
    }
}

/// Checks the ring and clamps a copy of it into the `width x height` grid.
pub(crate) fn clamped_ring(ring: &[Vertex], height: usize, width: usize) -> Result<Vec<Vertex>> {
    if ring.len() < 3 {
        return Err(CoreError::DegeneratePolygon("fewer than 3 vertices"));
    }
    if ring.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFiniteVertex);
    }
    let mut out: Vec<Vertex> = ring.to_vec();
    for v in &mut out {
        v.clamp_to(width as f64, height as f64);
    }
    if libm::fabs(signed_area(&out)) < MIN_AREA {
        return Err(CoreError::DegeneratePolygon("zero area after clamping"));
    }
    Ok(out)
}

/// Rasterizes one closed ring onto a `height x width` grid.
pub fn rasterize_polygon(
    ring: &[Vertex],
    height: usize,
    width: usize,
    scope: MaskScope,
) -> Result<GlyphMask> {
    if height == 0 || width == 0 {
        return Err(CoreError::InvalidSize { width, height });
    }
    let ring = clamped_ring(ring, height, width)?;
    let mut mask = GlyphMask::empty(height, width, scope);
    fill_even_odd(&ring, &mut mask);
    Ok(mask)
}

/// Scanline fill. Each row is sampled at its (nudged) center line; crossings
/// use the half-open rule `(y0 <= y) != (y1 <= y)` so shared vertices are
/// counted once.
fn fill_even_odd(ring: &[Vertex], mask: &mut GlyphMask) {
    let g = centroid(ring);
    let n = ring.len();
    let (height, width) = (mask.height(), mask.width());

    let min_y = ring.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let max_y = ring.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
    let mut crossings: Vec<f64> = Vec::with_capacity(n);

    for row in 0..height {
        let cy = row as f64 + 0.5;
        if cy + 1.0 < min_y || cy - 1.0 > max_y {
            continue;
        }
        let y = toward(cy, g.y);
        crossings.clear();
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            if (a.y <= y) != (b.y <= y) {
                let t = (y - a.y) / (b.y - a.y);
                crossings.push(a.x + t * (b.x - a.x));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);

        // Sweep columns left to right; `passed` counts crossings strictly
        // left of the nudged center.
        let mut passed = 0usize;
        for col in 0..width {
            let x = toward(col as f64 + 0.5, g.x);
            while passed < crossings.len() && crossings[passed] < x {
                passed += 1;
            }
            if passed % 2 == 1 {
                mask.set(row, col, true);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn square(x0: f64, y0: f64, side: f64) -> Vec<Vertex> {
        vec![
            Vertex::new(x0, y0),
            Vertex::new(x0 + side, y0),
            Vertex::new(x0 + side, y0 + side),
            Vertex::new(x0, y0 + side),
        ]
    }

    #[test]
    fn unit_square_fills_sixteen_pixels() {
        let m = rasterize_polygon(&square(0.0, 0.0, 4.0), 8, 8, MaskScope::ImageLevel).unwrap();
        assert_eq!(m.count(), 16);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(m.get(r, c), r < 4 && c < 4);
            }
        }
    }

    #[test]
    fn two_vertices_is_degenerate() {
        let ring = [Vertex::new(0.0, 0.0), Vertex::new(3.0, 3.0)];
        assert!(matches!(
            rasterize_polygon(&ring, 8, 8, MaskScope::ImageLevel),
            Err(CoreError::DegeneratePolygon(_))
        ));
    }

    #[test]
    fn collinear_ring_is_degenerate() {
        let ring = [
            Vertex::new(0.0, 0.0),
            Vertex::new(2.0, 2.0),
            Vertex::new(4.0, 4.0),
        ];
        assert!(rasterize_polygon(&ring, 8, 8, MaskScope::ImageLevel).is_err());
    }

    #[test]
    fn fully_out_of_bounds_clamps_to_zero_area() {
        let ring = square(20.0, 20.0, 4.0);
        assert!(matches!(
            rasterize_polygon(&ring, 8, 8, MaskScope::ImageLevel),
            Err(CoreError::DegeneratePolygon(_))
        ));
    }

    #[test]
    fn orientation_does_not_matter() {
        let mut ring = vec![
            Vertex::new(1.0, 1.0),
            Vertex::new(6.5, 2.0),
            Vertex::new(5.0, 7.0),
            Vertex::new(2.0, 5.5),
        ];
        let a = rasterize_polygon(&ring, 8, 8, MaskScope::ImageLevel).unwrap();
        ring.reverse();
        let b = rasterize_polygon(&ring, 8, 8, MaskScope::ImageLevel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_centers_are_owned_consistently() {
        // Edges run exactly through pixel centers at x = 1.5 and x = 4.5.
        let ring = [
            Vertex::new(1.5, 0.0),
            Vertex::new(4.5, 0.0),
            Vertex::new(4.5, 8.0),
            Vertex::new(1.5, 8.0),
        ];
        let m = rasterize_polygon(&ring, 8, 8, MaskScope::ImageLevel).unwrap();
        // Nudged toward the centroid (x = 3.0), both boundary columns are in.
        for r in 0..8 {
            assert!(m.get(r, 1) && m.get(r, 4));
            assert!(!m.get(r, 0) && !m.get(r, 5));
        }
        assert_eq!(m.count(), 32);
    }

    #[test]
    fn centroid_of_square() {
        let c = centroid(&square(2.0, 4.0, 2.0));
        assert!((c.x - 3.0).abs() < 1e-12 && (c.y - 5.0).abs() < 1e-12);
    }
}
